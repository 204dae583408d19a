//! Observation sets and cross-concentrated sampling (CCS) plans.
//!
//! A CCS plan picks horizontal slices I and lateral slices J uniformly at
//! random, then draws independent Bernoulli masks on the row slab
//! [T]_{I,:,:} (rate p_R) and the column slab [T]_{:,J,:} (rate p_C).
//! Coordinates are global; the (I, J) overlap block belongs to both slabs
//! and the two masks are merged by coordinate union there.
//!
//! Draw order (fixed for reproducibility): first I, then J via partial
//! Fisher-Yates; then one Bernoulli draw per R-slab coordinate visiting
//! (k, i, j) in ascending order with i over the distinct values of I; then
//! the C-slab the same way with j over the distinct values of J. Duplicate
//! slices from with-replacement selection do not re-draw their coordinates.

pub mod rng;

use crate::tensor::{DenseTensor3, IndexSet};
use crate::{Error, Result};
use rng::PlanRng;

/// One observed coordinate and (after capture) its value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

impl Observation {
    fn key(&self) -> (usize, usize, usize) {
        (self.k, self.i, self.j)
    }
}

/// A set of observed coordinates over one tensor shape, sorted k-major then
/// (i, j). With the dedup flag set, duplicates are rejected at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    shape: (usize, usize, usize),
    entries: Vec<Observation>,
    dedup: bool,
}

impl ObservationSet {
    /// Coordinates only (values zero). Sorts and, when `dedup`, rejects
    /// duplicate coordinates.
    pub fn from_coords(
        shape: (usize, usize, usize),
        coords: Vec<(usize, usize, usize)>,
        dedup: bool,
    ) -> Result<Self> {
        let entries = coords
            .into_iter()
            .map(|(i, j, k)| Observation { i, j, k, value: 0.0 })
            .collect();
        Self::from_entries(shape, entries, dedup)
    }

    /// Entries with values, e.g. parsed from a plan file.
    pub fn from_entries(
        shape: (usize, usize, usize),
        mut entries: Vec<Observation>,
        dedup: bool,
    ) -> Result<Self> {
        let (n1, n2, n3) = shape;
        for e in &entries {
            if e.i >= n1 || e.j >= n2 || e.k >= n3 {
                return Err(Error::Parameter(format!(
                    "observation ({}, {}, {}) out of range for shape {n1}x{n2}x{n3}",
                    e.i, e.j, e.k
                )));
            }
        }
        entries.sort_by_key(|e| e.key());
        if dedup {
            if let Some(w) = entries.windows(2).find(|w| w[0].key() == w[1].key()) {
                return Err(Error::Parameter(format!(
                    "duplicate observation at ({}, {}, {})",
                    w[0].i, w[0].j, w[0].k
                )));
            }
        }
        Ok(ObservationSet {
            shape,
            entries,
            dedup,
        })
    }

    pub fn empty(shape: (usize, usize, usize)) -> Self {
        ObservationSet {
            shape,
            entries: Vec::new(),
            dedup: true,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_dedup(&self) -> bool {
        self.dedup
    }

    /// Copy values from `t` at every coordinate.
    pub fn fill_values_from(&mut self, t: &DenseTensor3) -> Result<()> {
        if t.dims() != self.shape {
            return Err(Error::Shape(format!(
                "observation shape {:?} vs tensor {:?}",
                self.shape,
                t.dims()
            )));
        }
        for e in &mut self.entries {
            e.value = t.get(e.i, e.j, e.k);
        }
        Ok(())
    }

    /// Sum of squared stored values.
    pub fn energy(&self) -> f64 {
        self.entries.iter().map(|e| e.value * e.value).sum()
    }
}

/// Independent Bernoulli(p) mask over a full shape, coordinates only.
pub fn bernoulli_mask(
    shape: (usize, usize, usize),
    p: f64,
    rng: &mut PlanRng,
) -> Result<ObservationSet> {
    check_prob(p, "p")?;
    let (n1, n2, n3) = shape;
    let mut coords = Vec::new();
    for k in 0..n3 {
        for i in 0..n1 {
            for j in 0..n2 {
                if rng.bernoulli(p) {
                    coords.push((i, j, k));
                }
            }
        }
    }
    ObservationSet::from_coords(shape, coords, true)
}

fn check_prob(p: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::Parameter(format!(
            "{name} = {p} is not a probability in [0, 1]"
        )));
    }
    Ok(())
}

/// Cross-concentrated sampling plan: slice sets, slab masks, rates, seed.
#[derive(Clone, Debug, PartialEq)]
pub struct CcsPlan {
    shape: (usize, usize, usize),
    i_set: IndexSet,
    j_set: IndexSet,
    omega_r: ObservationSet,
    omega_c: ObservationSet,
    p_r: f64,
    p_c: f64,
    seed: u64,
    captured: bool,
}

impl CcsPlan {
    /// Reassemble a plan from stored parts (deserialization path); checks the
    /// plan invariants: mask coordinates must lie on their slabs.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        shape: (usize, usize, usize),
        i_set: IndexSet,
        j_set: IndexSet,
        omega_r: ObservationSet,
        omega_c: ObservationSet,
        p_r: f64,
        p_c: f64,
        seed: u64,
        captured: bool,
    ) -> Result<Self> {
        let (n1, n2, _) = shape;
        check_prob(p_r, "p_R")?;
        check_prob(p_c, "p_C")?;
        if i_set.bound() != n1 || j_set.bound() != n2 {
            return Err(Error::Parameter(format!(
                "index-set bounds ({}, {}) do not match shape {:?}",
                i_set.bound(),
                j_set.bound(),
                shape
            )));
        }
        if omega_r.shape() != shape || omega_c.shape() != shape {
            return Err(Error::Shape("mask shape differs from plan shape".into()));
        }
        let in_i = i_set.membership();
        if let Some(e) = omega_r.entries().iter().find(|e| !in_i[e.i]) {
            return Err(Error::Parameter(format!(
                "row-slab observation at i = {} but {} is not in I",
                e.i, e.i
            )));
        }
        let in_j = j_set.membership();
        if let Some(e) = omega_c.entries().iter().find(|e| !in_j[e.j]) {
            return Err(Error::Parameter(format!(
                "column-slab observation at j = {} but {} is not in J",
                e.j, e.j
            )));
        }
        Ok(CcsPlan {
            shape,
            i_set,
            j_set,
            omega_r,
            omega_c,
            p_r,
            p_c,
            seed,
            captured,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn i_set(&self) -> &IndexSet {
        &self.i_set
    }

    pub fn j_set(&self) -> &IndexSet {
        &self.j_set
    }

    pub fn omega_r(&self) -> &ObservationSet {
        &self.omega_r
    }

    pub fn omega_c(&self) -> &ObservationSet {
        &self.omega_c
    }

    pub fn p_r(&self) -> f64 {
        self.p_r
    }

    pub fn p_c(&self) -> f64 {
        self.p_c
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// True once observation values have been filled in from a tensor.
    pub fn is_captured(&self) -> bool {
        self.captured
    }

    /// Slice fraction |I|/n1 when it equals |J|/n2 exactly, else None.
    pub fn delta(&self) -> Option<f64> {
        let (n1, n2, _) = self.shape;
        if self.i_set.len() * n2 == self.j_set.len() * n1 {
            Some(self.i_set.len() as f64 / n1 as f64)
        } else {
            None
        }
    }

    /// Merged Omega_R  union Omega_C, overlap counted once. Values are taken
    /// from whichever slab recorded the coordinate (identical after capture).
    pub fn union_entries(&self) -> Vec<Observation> {
        let a = self.omega_r.entries();
        let b = self.omega_c.entries();
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut x, mut y) = (0usize, 0usize);
        while x < a.len() && y < b.len() {
            match a[x].key().cmp(&b[y].key()) {
                std::cmp::Ordering::Less => {
                    out.push(a[x]);
                    x += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[y]);
                    y += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[x]);
                    x += 1;
                    y += 1;
                }
            }
        }
        out.extend_from_slice(&a[x..]);
        out.extend_from_slice(&b[y..]);
        out
    }

    /// alpha = |Omega_R union Omega_C| / (n1 n2 n3).
    pub fn overall_rate(&self) -> f64 {
        let (n1, n2, n3) = self.shape;
        self.union_entries().len() as f64 / (n1 * n2 * n3) as f64
    }

    /// Record t's values at every observed coordinate. t is not retained.
    pub fn capture(&mut self, t: &DenseTensor3) -> Result<()> {
        if t.dims() != self.shape {
            return Err(Error::Shape(format!(
                "capture: plan shape {:?} vs tensor {:?}",
                self.shape,
                t.dims()
            )));
        }
        self.omega_r.fill_values_from(t)?;
        self.omega_c.fill_values_from(t)?;
        self.captured = true;
        Ok(())
    }
}

/// Procedure: pick I (sizeI of n1) and J (sizeJ of n2) uniformly, then draw
/// Bernoulli masks at rates p_r / p_c on the two slabs. The seed is recorded
/// in the plan; identical seeds reproduce the plan exactly.
pub fn make_ccs_plan(
    shape: (usize, usize, usize),
    size_i: usize,
    size_j: usize,
    p_r: f64,
    p_c: f64,
    replacement: bool,
    seed: u64,
) -> Result<CcsPlan> {
    let (n1, n2, n3) = shape;
    if n1 == 0 || n2 == 0 || n3 == 0 {
        return Err(Error::Parameter(format!("empty shape {shape:?}")));
    }
    check_prob(p_r, "p_R")?;
    check_prob(p_c, "p_C")?;
    if !replacement && (size_i > n1 || size_j > n2) {
        return Err(Error::Parameter(format!(
            "without replacement, slice counts ({size_i}, {size_j}) cannot exceed ({n1}, {n2})"
        )));
    }
    let mut rng = PlanRng::from_seed(seed);
    let (i_set, j_set) = if replacement {
        (
            IndexSet::with_replacement(rng.choose_with_replacement(n1, size_i), n1)?,
            IndexSet::with_replacement(rng.choose_with_replacement(n2, size_j), n2)?,
        )
    } else {
        (
            IndexSet::without_replacement(rng.choose(n1, size_i), n1)?,
            IndexSet::without_replacement(rng.choose(n2, size_j), n2)?,
        )
    };

    let mut i_distinct: Vec<usize> = i_set.indices().to_vec();
    i_distinct.sort_unstable();
    i_distinct.dedup();
    let mut j_distinct: Vec<usize> = j_set.indices().to_vec();
    j_distinct.sort_unstable();
    j_distinct.dedup();

    let mut r_coords = Vec::new();
    for k in 0..n3 {
        for &i in &i_distinct {
            for j in 0..n2 {
                if rng.bernoulli(p_r) {
                    r_coords.push((i, j, k));
                }
            }
        }
    }
    let mut c_coords = Vec::new();
    for k in 0..n3 {
        for i in 0..n1 {
            for &j in &j_distinct {
                if rng.bernoulli(p_c) {
                    c_coords.push((i, j, k));
                }
            }
        }
    }
    CcsPlan::from_parts(
        shape,
        i_set,
        j_set,
        ObservationSet::from_coords(shape, r_coords, true)?,
        ObservationSet::from_coords(shape, c_coords, true)?,
        p_r,
        p_c,
        seed,
        false,
    )
}

/// P_Omega: keep observed coordinates of `t`, zero elsewhere.
pub fn project(t: &DenseTensor3, omega: &ObservationSet) -> Result<DenseTensor3> {
    if t.dims() != omega.shape() {
        return Err(Error::Shape(format!(
            "project: tensor {:?} vs mask {:?}",
            t.dims(),
            omega.shape()
        )));
    }
    let mut out = DenseTensor3::zeros(t.n1(), t.n2(), t.n3())?;
    for e in omega.entries() {
        out.set(e.i, e.j, e.k, t.get(e.i, e.j, e.k));
    }
    Ok(out)
}

/// Expected overall rate of a CCS plan by inclusion-exclusion: the overlap
/// block is hit at rate 1 - (1-p_R)(1-p_C), the slab remainders at their own
/// rates. Duplicated slices count once.
pub fn expected_alpha(
    shape: (usize, usize, usize),
    distinct_i: usize,
    distinct_j: usize,
    p_r: f64,
    p_c: f64,
) -> f64 {
    let (n1, n2, n3) = shape;
    let overlap = (distinct_i * distinct_j * n3) as f64;
    let r_only = (distinct_i * n2 * n3) as f64 - overlap;
    let c_only = (n1 * distinct_j * n3) as f64 - overlap;
    let q = 1.0 - (1.0 - p_r) * (1.0 - p_c);
    (r_only * p_r + c_only * p_c + overlap * q) / (n1 * n2 * n3) as f64
}

/// Shared slab rate p (= p_R = p_C) whose expected overall rate is `alpha`.
pub fn prob_for_alpha(
    shape: (usize, usize, usize),
    distinct_i: usize,
    distinct_j: usize,
    alpha: f64,
) -> Result<f64> {
    let (n1, n2, n3) = shape;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha = {alpha} outside [0, 1]")));
    }
    let overlap = (distinct_i * distinct_j * n3) as f64;
    let r_only = (distinct_i * n2 * n3) as f64 - overlap;
    let c_only = (n1 * distinct_j * n3) as f64 - overlap;
    let target = alpha * (n1 * n2 * n3) as f64;
    let reachable = r_only + c_only + overlap;
    if target > reachable + 1e-9 {
        return Err(Error::Parameter(format!(
            "alpha = {alpha} needs {target} entries but the slabs only cover {reachable}"
        )));
    }
    if overlap == 0.0 {
        if r_only + c_only == 0.0 {
            return Err(Error::Parameter("slabs are empty; alpha unreachable".into()));
        }
        return Ok((target / (r_only + c_only)).min(1.0));
    }
    // solve p^2 c - p (a + b + 2c) + target = 0 for the root in [0, 1]
    let (a, b, c) = (r_only, c_only, overlap);
    let s = a + b + 2.0 * c;
    let disc = (s * s - 4.0 * c * target).max(0.0);
    Ok(((s - disc.sqrt()) / (2.0 * c)).clamp(0.0, 1.0))
}
