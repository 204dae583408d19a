//! Completion solvers for cross-concentrated samples.
//!
//! `itcurtc` is the iterative solver: residual gradient steps on the row
//! slab, column slab, and core block, a rank-r truncation of the core, and
//! a patch of the two unobserved corner blocks from the core's t-SVD bases.
//! `tstc` is the non-iterative two-stage variant: complete each slab
//! independently with a sub-solver, then join them through the core with a
//! t-CUR product.

use std::io::Write;
use std::time::Instant;

use crate::error::Error;
use crate::metrics;
use crate::Result;
use crate::sampling::{CcsPlan, Observation, ObservationSet};
use crate::spectral::{dft3, idft3, slice_svds, tpinv, truncate_rank, CMat, DEFAULT_RANK_TOL};
use crate::tcur::CurFactors;
use crate::tensor::{subtensor, tprod, DenseTensor3, IndexSet};

// ---------------------------------------------------------------------------
// meters
// ---------------------------------------------------------------------------

/// Multiply-add counter for the solver's arithmetic core: the spectral
/// corner-block products and the per-observation residual work. FFTs and
/// SVDs are excluded; they are shared plumbing whose cost does not depend
/// on which update rule runs on top.
#[derive(Clone, Copy, Debug, Default)]
struct CostMeter {
    multiply_adds: u64,
}

impl CostMeter {
    fn add(&mut self, n: u64) {
        self.multiply_adds += n;
    }
}

/// Live-entry accounting for buffers the solver holds across statements.
/// Real scalars count one entry, complex two. Expression temporaries and
/// the O(n3) FFT scratch are ignored, as are index maps and report vectors.
#[derive(Clone, Copy, Debug, Default)]
struct MemoryMeter {
    live: usize,
    peak: usize,
}

impl MemoryMeter {
    fn alloc(&mut self, entries: usize) {
        self.live += entries;
        if self.live > self.peak {
            self.peak = self.live;
        }
    }

    fn release(&mut self, entries: usize) {
        debug_assert!(entries <= self.live);
        self.live = self.live.saturating_sub(entries);
    }
}

// ---------------------------------------------------------------------------
// index bookkeeping
// ---------------------------------------------------------------------------

/// Global index -> slab position maps for the selected rows/columns and
/// their complements. The solver needs these to be bijections, so plans
/// whose index sets contain duplicates are rejected up front.
struct Maps {
    i_list: Vec<usize>,
    j_list: Vec<usize>,
    i_comp: Vec<usize>,
    j_comp: Vec<usize>,
    row_pos: Vec<Option<usize>>,
    col_pos: Vec<Option<usize>>,
    row_comp_pos: Vec<Option<usize>>,
    col_comp_pos: Vec<Option<usize>>,
}

type AxisMaps = (Vec<usize>, Vec<usize>, Vec<Option<usize>>, Vec<Option<usize>>);

fn build_axis(set: &IndexSet, n: usize, axis: &str) -> Result<AxisMaps> {
    let list = set.indices().to_vec();
    let mut pos = vec![None; n];
    for (p, &g) in list.iter().enumerate() {
        if pos[g].is_some() {
            return Err(Error::Parameter(format!(
                "{axis} index {g} appears more than once; the solver needs duplicate-free index sets"
            )));
        }
        pos[g] = Some(p);
    }
    let comp: Vec<usize> = (0..n).filter(|&g| pos[g].is_none()).collect();
    let mut comp_pos = vec![None; n];
    for (p, &g) in comp.iter().enumerate() {
        comp_pos[g] = Some(p);
    }
    Ok((list, comp, pos, comp_pos))
}

impl Maps {
    fn build(plan: &CcsPlan) -> Result<Maps> {
        let (n1, n2, _) = plan.shape();
        let (i_list, i_comp, row_pos, row_comp_pos) = build_axis(plan.i_set(), n1, "row")?;
        let (j_list, j_comp, col_pos, col_comp_pos) = build_axis(plan.j_set(), n2, "column")?;
        Ok(Maps {
            i_list,
            j_list,
            i_comp,
            j_comp,
            row_pos,
            col_pos,
            row_comp_pos,
            col_comp_pos,
        })
    }
}

// ---------------------------------------------------------------------------
// solver state
// ---------------------------------------------------------------------------

/// Truncated spectral factors of the current core: per-slice orthonormal
/// bases for its column space (w) and row space (v). Widths equal the
/// effective rank of each slice, at most the configured r; directions whose
/// singular values sit at numerical zero are dropped, not padded.
#[derive(Clone)]
struct UCache {
    w: Vec<CMat>,
    v: Vec<CMat>,
}

impl UCache {
    fn entries(&self) -> usize {
        self.w
            .iter()
            .chain(self.v.iter())
            .map(|m| 2 * m.len())
            .sum()
    }
}

#[derive(Clone)]
struct SolverState {
    /// Column slab estimate, n1 x |J| x n3.
    c: DenseTensor3,
    /// Row slab estimate, |I| x n2 x n3.
    r: DenseTensor3,
    /// Core block, |I| x |J| x n3; always equals the I rows of c and the
    /// J columns of r.
    u: DenseTensor3,
    cache: UCache,
}

impl SolverState {
    fn zeros(plan: &CcsPlan) -> Result<SolverState> {
        let (n1, n2, n3) = plan.shape();
        let si = plan.i_set().len();
        let sj = plan.j_set().len();
        Ok(SolverState {
            c: DenseTensor3::zeros(n1, sj, n3)?,
            r: DenseTensor3::zeros(si, n2, n3)?,
            u: DenseTensor3::zeros(si, sj, n3)?,
            cache: UCache {
                w: vec![CMat::zeros(si, 0); n3],
                v: vec![CMat::zeros(sj, 0); n3],
            },
        })
    }

    fn snapshot_factors(&self, plan: &CcsPlan) -> CurFactors {
        CurFactors {
            c: self.c.clone(),
            u: self.u.clone(),
            r: self.r.clone(),
            i_set: plan.i_set().clone(),
            j_set: plan.j_set().clone(),
        }
    }

    fn entries(&self) -> usize {
        self.c.len() + self.r.len() + self.u.len() + self.cache.entries()
    }
}

/// Resumable iterate for step-at-a-time driving: the three factor slabs
/// plus the cached t-SVD bases of the core.
#[derive(Clone)]
pub struct ItcurtcState {
    inner: SolverState,
}

impl ItcurtcState {
    pub fn zeros(plan: &CcsPlan) -> Result<ItcurtcState> {
        Maps::build(plan)?;
        Ok(ItcurtcState {
            inner: SolverState::zeros(plan)?,
        })
    }

    /// Seed from existing factors. The core is rank-capped at `r` on entry
    /// and mirrored back into both slabs, a no-op when the factors already
    /// agree and the core has tubal rank at most r.
    pub fn from_factors(f: &CurFactors, plan: &CcsPlan, r: usize) -> Result<ItcurtcState> {
        let maps = Maps::build(plan)?;
        let (n1, n2, n3) = plan.shape();
        let si = maps.i_list.len();
        let sj = maps.j_list.len();
        if f.i_set.indices() != plan.i_set().indices()
            || f.j_set.indices() != plan.j_set().indices()
        {
            return Err(Error::Parameter(
                "factor index sets do not match the sampling plan".into(),
            ));
        }
        if f.c.dims() != (n1, sj, n3) || f.r.dims() != (si, n2, n3) || f.u.dims() != (si, sj, n3) {
            return Err(Error::Shape(format!(
                "factor dims {:?}/{:?}/{:?} do not fit a {n1}x{n2}x{n3} plan with |I|={si}, |J|={sj}",
                f.c.dims(),
                f.u.dims(),
                f.r.dims()
            )));
        }
        if r < 1 || r > si.min(sj) {
            return Err(Error::Parameter(format!(
                "target rank {r} outside 1..=min(|I|, |J|) = {}",
                si.min(sj)
            )));
        }
        let mut cost = CostMeter::default();
        let mut mem = MemoryMeter::default();
        let (u, cache) = truncate_with_cache(&f.u, r, &mut cost, &mut mem)?;
        let mut c = f.c.clone();
        let mut rt = f.r.clone();
        mirror_core(&u, &maps, &mut c, &mut rt);
        Ok(ItcurtcState {
            inner: SolverState { c, r: rt, u, cache },
        })
    }

    pub fn c(&self) -> &DenseTensor3 {
        &self.inner.c
    }

    pub fn r(&self) -> &DenseTensor3 {
        &self.inner.r
    }

    pub fn u(&self) -> &DenseTensor3 {
        &self.inner.u
    }

    pub fn factors(&self, plan: &CcsPlan) -> CurFactors {
        self.inner.snapshot_factors(plan)
    }
}

/// Write the core block into the I rows of the column slab and the J
/// columns of the row slab, keeping the three tensors consistent.
fn mirror_core(u: &DenseTensor3, maps: &Maps, c: &mut DenseTensor3, r: &mut DenseTensor3) {
    let (si, sj, n3) = u.dims();
    for p in 0..si {
        for q in 0..sj {
            for k in 0..n3 {
                let val = u.get(p, q, k);
                c.set(maps.i_list[p], q, k, val);
                r.set(p, maps.j_list[q], k, val);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// iterate assembly
// ---------------------------------------------------------------------------

/// The live blocks of a cross iterate. Rows outside I and columns outside J
/// intersect in a corner the sampling plan never observes, so that block is
/// never materialized. `tc`/`tr` are None when I or J covers its whole axis.
pub struct EstimateBlocks {
    /// Rows outside I at columns J: (n1 - |I|) x |J| x n3.
    pub tc: Option<DenseTensor3>,
    /// Rows I at columns outside J: |I| x (n2 - |J|) x n3.
    pub tr: Option<DenseTensor3>,
    /// Core block on I x J.
    pub u: DenseTensor3,
    row_pos: Vec<Option<usize>>,
    col_pos: Vec<Option<usize>>,
    row_comp_pos: Vec<Option<usize>>,
    col_comp_pos: Vec<Option<usize>>,
}

impl EstimateBlocks {
    pub fn new(
        plan: &CcsPlan,
        tc: Option<DenseTensor3>,
        tr: Option<DenseTensor3>,
        u: DenseTensor3,
    ) -> Result<EstimateBlocks> {
        let maps = Maps::build(plan)?;
        EstimateBlocks::from_parts(&maps, plan.shape(), tc, tr, u)
    }

    fn from_parts(
        maps: &Maps,
        shape: (usize, usize, usize),
        tc: Option<DenseTensor3>,
        tr: Option<DenseTensor3>,
        u: DenseTensor3,
    ) -> Result<EstimateBlocks> {
        let (n1, n2, n3) = shape;
        let si = maps.i_list.len();
        let sj = maps.j_list.len();
        let tc_dims = tc.as_ref().map(|t| t.dims());
        let tr_dims = tr.as_ref().map(|t| t.dims());
        let tc_ok = match tc_dims {
            Some(d) => d == (n1 - si, sj, n3),
            None => si == n1,
        };
        let tr_ok = match tr_dims {
            Some(d) => d == (si, n2 - sj, n3),
            None => sj == n2,
        };
        if !tc_ok || !tr_ok || u.dims() != (si, sj, n3) {
            return Err(Error::Shape(format!(
                "block dims tc={tc_dims:?} tr={tr_dims:?} u={:?} do not fit a {n1}x{n2}x{n3} \
                 cross with |I|={si}, |J|={sj}",
                u.dims()
            )));
        }
        Ok(EstimateBlocks {
            tc,
            tr,
            u,
            row_pos: maps.row_pos.clone(),
            col_pos: maps.col_pos.clone(),
            row_comp_pos: maps.row_comp_pos.clone(),
            col_comp_pos: maps.col_comp_pos.clone(),
        })
    }

    /// Iterate value at a global coordinate; None outside the cross or out
    /// of range.
    pub fn value_at(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        if k >= self.u.n3() || i >= self.row_pos.len() || j >= self.col_pos.len() {
            return None;
        }
        match (self.row_pos[i], self.col_pos[j]) {
            (Some(pi), Some(pj)) => Some(self.u.get(pi, pj, k)),
            (Some(pi), None) => {
                let pj = self.col_comp_pos[j]?;
                Some(self.tr.as_ref()?.get(pi, pj, k))
            }
            (None, Some(pj)) => {
                let pi = self.row_comp_pos[i]?;
                Some(self.tc.as_ref()?.get(pi, pj, k))
            }
            (None, None) => None,
        }
    }

    fn entries(&self) -> usize {
        self.tc.as_ref().map_or(0, |t| t.len())
            + self.tr.as_ref().map_or(0, |t| t.len())
            + self.u.len()
    }
}

/// Patch one corner block: gather the complement part of a slab, move to
/// the spectral domain, project every slice through the cached core bases,
/// and come back. `project` maps a slab spectral slice to the block slice.
fn project_block<F>(
    gather: &dyn Fn(&mut DenseTensor3),
    dims: (usize, usize, usize),
    project: F,
    cost: &mut CostMeter,
    mem: &mut MemoryMeter,
) -> Result<DenseTensor3>
where
    F: Fn(&CMat, usize, &mut CostMeter) -> CMat,
{
    let (b1, b2, n3) = dims;
    let mut sub = DenseTensor3::zeros(b1, b2, n3)?;
    mem.alloc(sub.len());
    gather(&mut sub);
    let mut spec = dft3(&sub);
    mem.alloc(2 * sub.len());
    let sub_len = sub.len();
    drop(sub);
    mem.release(sub_len);
    for k in 0..n3 {
        let projected = project(&spec.slices()[k], k, cost);
        spec.slices_mut()[k] = projected;
    }
    let out = idft3(&spec)?;
    mem.alloc(out.len());
    mem.release(2 * sub_len);
    Ok(out)
}

/// Assemble the iterate blocks from the current factors: the core is used
/// as is, and the corner blocks are projections of the complement slab
/// parts onto the core's row and column spaces.
fn assemble(
    maps: &Maps,
    state: &SolverState,
    shape: (usize, usize, usize),
    cost: &mut CostMeter,
    mem: &mut MemoryMeter,
) -> Result<EstimateBlocks> {
    let (_, _, n3) = shape;
    let si = maps.i_list.len();
    let sj = maps.j_list.len();
    let ci = maps.i_comp.len();
    let cj = maps.j_comp.len();

    // [T]_{I^c, J} = [C]_{I^c} * V * V^T: rows of the column slab outside I,
    // projected onto the core's row space.
    let tc = if ci == 0 {
        None
    } else {
        let cache = &state.cache;
        Some(project_block(
            &|sub: &mut DenseTensor3| {
                for (p, &g) in maps.i_comp.iter().enumerate() {
                    for q in 0..sj {
                        for k in 0..n3 {
                            sub.set(p, q, k, state.c.get(g, q, k));
                        }
                    }
                }
            },
            (ci, sj, n3),
            |slice, k, cost| {
                let v = &cache.v[k];
                cost.add((2 * ci * sj * v.ncols()) as u64);
                (slice * v) * v.adjoint()
            },
            cost,
            mem,
        )?)
    };

    // [T]_{I, J^c} = W * W^T * [R]_{:, J^c}: columns of the row slab outside
    // J, projected onto the core's column space.
    let tr = if cj == 0 {
        None
    } else {
        let cache = &state.cache;
        Some(project_block(
            &|sub: &mut DenseTensor3| {
                for p in 0..si {
                    for (q, &g) in maps.j_comp.iter().enumerate() {
                        for k in 0..n3 {
                            sub.set(p, q, k, state.r.get(p, g, k));
                        }
                    }
                }
            },
            (si, cj, n3),
            |slice, k, cost| {
                let w = &cache.w[k];
                cost.add((2 * si * cj * w.ncols()) as u64);
                w * (w.adjoint() * slice)
            },
            cost,
            mem,
        )?)
    };

    let u = state.u.clone();
    mem.alloc(u.len());
    EstimateBlocks::from_parts(maps, shape, tc, tr, u)
}

// ---------------------------------------------------------------------------
// stopping criterion
// ---------------------------------------------------------------------------

fn residual_e(union: &[Observation], blocks: &EstimateBlocks, cost: &mut CostMeter) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for o in union {
        let est = blocks.value_at(o.i, o.j, o.k).ok_or_else(|| {
            Error::Shape(format!(
                "observation ({}, {}, {}) lies outside the cross",
                o.i, o.j, o.k
            ))
        })?;
        let d = o.value - est;
        num += d * d;
        den += o.value * o.value;
    }
    cost.add(2 * union.len() as u64);
    if den == 0.0 {
        return Err(Error::Numerical(
            "observed energy is zero; the relative stopping criterion would divide by zero".into(),
        ));
    }
    Ok(num / den)
}

/// Relative observed-residual energy of an iterate:
/// ||P_Omega(T - T_k)||_F^2 / ||P_Omega(T)||_F^2 with Omega the
/// deduplicated union of the two observation slabs.
pub fn stopping_e(plan: &CcsPlan, blocks: &EstimateBlocks) -> Result<f64> {
    if !plan.is_captured() {
        return Err(Error::Parameter(
            "plan carries no captured values; fill them from a data tensor first".into(),
        ));
    }
    residual_e(&plan.union_entries(), blocks, &mut CostMeter::default())
}

// ---------------------------------------------------------------------------
// the iterative solver
// ---------------------------------------------------------------------------

/// Knobs for the iterative solver. Step sizes left as None default to the
/// inverse sampling rates of their slabs (1/p_R, 1/p_C, and 1/max(p_R, p_C)
/// for the core), which makes each scatter step an unbiased estimate of the
/// full residual on its block.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub r: usize,
    pub eta_r: Option<f64>,
    pub eta_c: Option<f64>,
    pub eta_u: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Emit one `k,e_k[,eps_k]` line per iteration to the sink passed to
    /// `itcurtc_with`.
    pub trace: bool,
}

impl SolverConfig {
    pub fn new(r: usize) -> SolverConfig {
        SolverConfig {
            r,
            eta_r: None,
            eta_c: None,
            eta_u: None,
            tol: 1e-6,
            max_iter: 500,
            trace: false,
        }
    }
}

/// What a solver run did. `iterations` counts assembly passes, so the last
/// entry of `e_history` is the residual of the returned factors; when
/// `converged` is set that entry is the one that passed the tolerance.
#[derive(Clone, Debug)]
pub struct SolverReport {
    pub iterations: usize,
    pub e_history: Vec<f64>,
    /// Per-iteration relative error against the ground truth, present only
    /// when a truth tensor was supplied.
    pub eps_history: Option<Vec<f64>>,
    pub converged: bool,
    pub wall_seconds: f64,
    pub multiply_adds: u64,
    pub peak_live_entries: usize,
}

fn validate_cfg(cfg: &SolverConfig) -> Result<()> {
    if cfg.r < 1 {
        return Err(Error::Parameter("target rank must be at least 1".into()));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::Parameter(format!(
            "tolerance {} must be positive",
            cfg.tol
        )));
    }
    if cfg.max_iter == 0 {
        return Err(Error::Parameter("max_iter must be at least 1".into()));
    }
    Ok(())
}

fn resolve_etas(plan: &CcsPlan, cfg: &SolverConfig) -> Result<(f64, f64, f64)> {
    // A zero rate means the slab expects no observations, so its step size
    // is never applied; 1.0 keeps the default finite.
    let inv = |p: f64| if p > 0.0 { 1.0 / p } else { 1.0 };
    let eta_r = cfg.eta_r.unwrap_or_else(|| inv(plan.p_r()));
    let eta_c = cfg.eta_c.unwrap_or_else(|| inv(plan.p_c()));
    let eta_u = cfg.eta_u.unwrap_or_else(|| inv(plan.p_r().max(plan.p_c())));
    for (name, e) in [("eta_r", eta_r), ("eta_c", eta_c), ("eta_u", eta_u)] {
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::Parameter(format!(
                "step size {name} = {e} must be positive and finite"
            )));
        }
    }
    Ok((eta_r, eta_c, eta_u))
}

/// Rank-r truncation of the core plus the per-slice bases the corner
/// patches reuse. The singular value cutoff is relative to the largest
/// value across all slices, matching the library-wide rank convention.
fn truncate_with_cache(
    u_tilde: &DenseTensor3,
    r: usize,
    cost: &mut CostMeter,
    mem: &mut MemoryMeter,
) -> Result<(DenseTensor3, UCache)> {
    let _ = cost;
    let (_, _, n3) = u_tilde.dims();
    let mut spec = dft3(u_tilde);
    mem.alloc(2 * u_tilde.len());
    let svds = slice_svds(&spec)?;
    let svd_entries: usize = svds
        .iter()
        .map(|s| 2 * (s.u.len() + s.vt.len()) + s.sigma.len())
        .sum();
    mem.alloc(svd_entries);
    let smax = svds
        .iter()
        .flat_map(|s| s.sigma.iter())
        .fold(0.0f64, |a, &b| a.max(b));
    let thr = DEFAULT_RANK_TOL * smax;
    let mut w = Vec::with_capacity(n3);
    let mut v = Vec::with_capacity(n3);
    let mut cache_entries = 0usize;
    for (k, svd) in svds.iter().enumerate() {
        let r_eff = svd.sigma.iter().take(r).filter(|&&s| s > thr).count();
        let wk = svd.u.columns(0, r_eff).into_owned();
        let vk = svd.vt.rows(0, r_eff).adjoint();
        let mut scaled = wk.clone();
        for c in 0..r_eff {
            scaled.column_mut(c).scale_mut(svd.sigma[c]);
        }
        spec.slices_mut()[k] = &scaled * svd.vt.rows(0, r_eff);
        cache_entries += 2 * (wk.len() + vk.len());
        w.push(wk);
        v.push(vk);
    }
    mem.alloc(cache_entries);
    drop(svds);
    mem.release(svd_entries);
    let u = idft3(&spec)?;
    mem.alloc(u.len());
    mem.release(2 * u_tilde.len());
    Ok((u, UCache { w, v }))
}

/// One update: scatter residual steps into the three blocks, truncate the
/// core to rank r, and mirror it back into both slabs.
#[allow(clippy::too_many_arguments)]
fn apply_update(
    state: SolverState,
    blocks: &EstimateBlocks,
    plan: &CcsPlan,
    maps: &Maps,
    etas: (f64, f64, f64),
    r: usize,
    union: &[Observation],
    cost: &mut CostMeter,
    mem: &mut MemoryMeter,
) -> Result<SolverState> {
    let (eta_r, eta_c, eta_u) = etas;
    let (n1, n2, n3) = plan.shape();
    let si = maps.i_list.len();
    let sj = maps.j_list.len();

    // Row slab: outside J keep the projected block plus a residual step on
    // the row observations landing there; the J columns take the new core.
    let mut new_r = DenseTensor3::zeros(si, n2, n3)?;
    mem.alloc(new_r.len());
    if let Some(tr) = blocks.tr.as_ref() {
        for (q, &g) in maps.j_comp.iter().enumerate() {
            for p in 0..si {
                for k in 0..n3 {
                    new_r.set(p, g, k, tr.get(p, q, k));
                }
            }
        }
    }
    for o in plan.omega_r().entries() {
        if maps.col_pos[o.j].is_some() {
            continue; // core-block observations feed the core update below
        }
        let prev = new_r.get(
            maps.row_pos[o.i].expect("row observation off the I rows"),
            o.j,
            o.k,
        );
        let p = maps.row_pos[o.i].unwrap();
        new_r.set(p, o.j, o.k, prev + eta_r * (o.value - prev));
        cost.add(1);
    }

    // Column slab, the transposed picture.
    let mut new_c = DenseTensor3::zeros(n1, sj, n3)?;
    mem.alloc(new_c.len());
    if let Some(tc) = blocks.tc.as_ref() {
        for (p, &g) in maps.i_comp.iter().enumerate() {
            for q in 0..sj {
                for k in 0..n3 {
                    new_c.set(g, q, k, tc.get(p, q, k));
                }
            }
        }
    }
    for o in plan.omega_c().entries() {
        if maps.row_pos[o.i].is_some() {
            continue;
        }
        let q = maps.col_pos[o.j].expect("column observation off the J columns");
        let prev = new_c.get(o.i, q, o.k);
        new_c.set(o.i, q, o.k, prev + eta_c * (o.value - prev));
        cost.add(1);
    }

    // Core: residual step on the union (overlap entries counted once), then
    // rank truncation.
    let mut u_tilde = state.u.clone();
    mem.alloc(u_tilde.len());
    for o in union {
        let (Some(p), Some(q)) = (maps.row_pos[o.i], maps.col_pos[o.j]) else {
            continue;
        };
        let prev = u_tilde.get(p, q, o.k);
        u_tilde.set(p, q, o.k, prev + eta_u * (o.value - prev));
        cost.add(1);
    }
    let (new_u, cache) = truncate_with_cache(&u_tilde, r, cost, mem)?;
    let u_tilde_len = u_tilde.len();
    drop(u_tilde);
    mem.release(u_tilde_len);

    mirror_core(&new_u, maps, &mut new_c, &mut new_r);
    mem.release(state.entries());
    Ok(SolverState {
        c: new_c,
        r: new_r,
        u: new_u,
        cache,
    })
}

pub fn itcurtc(plan: &CcsPlan, cfg: &SolverConfig) -> Result<(CurFactors, SolverReport)> {
    itcurtc_with(plan, cfg, None, None)
}

/// Run the iterative solver. With a `truth` tensor the report additionally
/// carries the relative error of every iterate; with `cfg.trace` set, each
/// iteration writes one `k,e_k[,eps_k]` line to `sink`.
pub fn itcurtc_with(
    plan: &CcsPlan,
    cfg: &SolverConfig,
    truth: Option<&DenseTensor3>,
    mut sink: Option<&mut dyn Write>,
) -> Result<(CurFactors, SolverReport)> {
    let started = Instant::now();
    validate_cfg(cfg)?;
    if !plan.is_captured() {
        return Err(Error::Parameter(
            "plan carries no captured values; fill them from a data tensor first".into(),
        ));
    }
    if let Some(t) = truth {
        if t.dims() != plan.shape() {
            return Err(Error::Shape(format!(
                "truth dims {:?} do not match the plan shape {:?}",
                t.dims(),
                plan.shape()
            )));
        }
    }
    let maps = Maps::build(plan)?;
    let si = maps.i_list.len();
    let sj = maps.j_list.len();
    if cfg.r > si.min(sj) {
        return Err(Error::Parameter(format!(
            "target rank {} exceeds min(|I|, |J|) = {}",
            cfg.r,
            si.min(sj)
        )));
    }
    let etas = resolve_etas(plan, cfg)?;

    let mut cost = CostMeter::default();
    let mut mem = MemoryMeter::default();
    let mut state = SolverState::zeros(plan)?;
    mem.alloc(state.entries());
    let union = plan.union_entries();
    let mut report = SolverReport {
        iterations: 0,
        e_history: Vec::new(),
        eps_history: truth.map(|_| Vec::new()),
        converged: false,
        wall_seconds: 0.0,
        multiply_adds: 0,
        peak_live_entries: mem.peak,
    };
    if union.is_empty() {
        // Nothing to fit: report the zero iterate rather than guessing.
        report.wall_seconds = started.elapsed().as_secs_f64();
        return Ok((state.snapshot_factors(plan), report));
    }

    let mut e0 = f64::INFINITY;
    let mut high_streak = 0usize;
    for pass in 0..cfg.max_iter {
        let blocks = assemble(&maps, &state, plan.shape(), &mut cost, &mut mem)?;
        let e = residual_e(&union, &blocks, &mut cost)?;
        if pass == 0 {
            e0 = e;
        }
        report.e_history.push(e);
        if let Some(t) = truth {
            let eps = metrics::rel_error_factors(t, &state.snapshot_factors(plan))?;
            report.eps_history.as_mut().unwrap().push(eps);
        }
        if cfg.trace {
            if let Some(s) = sink.as_deref_mut() {
                match report.eps_history.as_ref().and_then(|h| h.last()) {
                    Some(eps) => writeln!(s, "{pass},{e},{eps}")?,
                    None => writeln!(s, "{pass},{e}")?,
                }
            }
        }
        if e <= cfg.tol {
            // The update is not applied; the returned factors are the ones
            // whose residual passed.
            report.converged = true;
            mem.release(blocks.entries());
            break;
        }
        if e > 10.0 * e0 {
            high_streak += 1;
            if high_streak >= 10 {
                return Err(Error::Divergence {
                    eta_r: etas.0,
                    eta_c: etas.1,
                    eta_u: etas.2,
                });
            }
        } else {
            high_streak = 0;
        }
        state = apply_update(state, &blocks, plan, &maps, etas, cfg.r, &union, &mut cost, &mut mem)?;
        mem.release(blocks.entries());
    }

    report.iterations = report.e_history.len();
    report.wall_seconds = started.elapsed().as_secs_f64();
    report.multiply_adds = cost.multiply_adds;
    report.peak_live_entries = mem.peak;
    Ok((state.snapshot_factors(plan), report))
}

/// One assembly + update pass. Returns the advanced state together with the
/// residual e of the input state, the quantity the driver would have tested
/// before stepping.
pub fn itcurtc_step(
    state: &ItcurtcState,
    plan: &CcsPlan,
    cfg: &SolverConfig,
) -> Result<(ItcurtcState, f64)> {
    validate_cfg(cfg)?;
    if !plan.is_captured() {
        return Err(Error::Parameter(
            "plan carries no captured values; fill them from a data tensor first".into(),
        ));
    }
    let maps = Maps::build(plan)?;
    let si = maps.i_list.len();
    let sj = maps.j_list.len();
    if cfg.r > si.min(sj) {
        return Err(Error::Parameter(format!(
            "target rank {} exceeds min(|I|, |J|) = {}",
            cfg.r,
            si.min(sj)
        )));
    }
    let etas = resolve_etas(plan, cfg)?;
    let union = plan.union_entries();
    if union.is_empty() {
        return Err(Error::Parameter(
            "plan has no observations; there is nothing to step on".into(),
        ));
    }
    let mut cost = CostMeter::default();
    let mut mem = MemoryMeter::default();
    let blocks = assemble(&maps, &state.inner, plan.shape(), &mut cost, &mut mem)?;
    let e = residual_e(&union, &blocks, &mut cost)?;
    let next = apply_update(
        state.inner.clone(),
        &blocks,
        plan,
        &maps,
        etas,
        cfg.r,
        &union,
        &mut cost,
        &mut mem,
    )?;
    Ok((ItcurtcState { inner: next }, e))
}

// ---------------------------------------------------------------------------
// the two-stage solver
// ---------------------------------------------------------------------------

/// Completes one observed slab to a target tubal rank. Coordinates in `obs`
/// are slab-local; the result must have the slab's shape.
pub trait SubSolver {
    fn complete(&self, obs: &ObservationSet, r: usize) -> Result<DenseTensor3>;
}

/// Iterative hard thresholding on one dense slab: gradient step on the
/// observed entries followed by rank truncation. The step size defaults to
/// the inverse empirical sampling rate of the slab.
#[derive(Clone, Debug)]
pub struct IhtSubSolver {
    pub eta: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IhtSubSolver {
    fn default() -> IhtSubSolver {
        IhtSubSolver {
            eta: None,
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

impl SubSolver for IhtSubSolver {
    fn complete(&self, obs: &ObservationSet, r: usize) -> Result<DenseTensor3> {
        let (n1, n2, n3) = obs.shape();
        let eta = self.eta.unwrap_or_else(|| {
            let rate = obs.len() as f64 / (n1 * n2 * n3) as f64;
            if rate > 0.0 {
                1.0 / rate
            } else {
                1.0
            }
        });
        iht_complete(obs, r, eta, self.tol, self.max_iter)
    }
}

/// Rank-r completion of a dense tensor from scattered observations by
/// iterated truncation. Runs to the relative-residual tolerance or the
/// iteration cap and returns the final iterate either way.
pub fn iht_complete(
    obs: &ObservationSet,
    r: usize,
    eta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DenseTensor3> {
    let (n1, n2, n3) = obs.shape();
    if obs.is_empty() {
        return Err(Error::Parameter(
            "cannot complete a slab with no observations".into(),
        ));
    }
    if !obs.is_dedup() {
        return Err(Error::Parameter(
            "observations must be deduplicated; repeated coordinates would double-count".into(),
        ));
    }
    if r < 1 || r > n1.min(n2) {
        return Err(Error::Parameter(format!(
            "target rank {r} outside 1..=min({n1}, {n2})"
        )));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::Parameter(format!(
            "step size {eta} must be positive and finite"
        )));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Parameter(
            "tolerance must be positive and max_iter at least 1".into(),
        ));
    }
    let den: f64 = obs.entries().iter().map(|o| o.value * o.value).sum();
    if den == 0.0 {
        return Err(Error::Numerical(
            "observed energy is zero; the relative stopping criterion would divide by zero".into(),
        ));
    }

    let mut x = DenseTensor3::zeros(n1, n2, n3)?;
    let mut e0 = f64::INFINITY;
    let mut high_streak = 0usize;
    for pass in 0..max_iter {
        let mut num = 0.0;
        for o in obs.entries() {
            let d = o.value - x.get(o.i, o.j, o.k);
            num += d * d;
        }
        let e = num / den;
        if pass == 0 {
            e0 = e;
        }
        if e <= tol {
            break;
        }
        if e > 10.0 * e0 {
            high_streak += 1;
            if high_streak >= 10 {
                // All three reported step sizes are the single slab step.
                return Err(Error::Divergence {
                    eta_r: eta,
                    eta_c: eta,
                    eta_u: eta,
                });
            }
        } else {
            high_streak = 0;
        }
        let mut g = x.clone();
        for o in obs.entries() {
            let prev = g.get(o.i, o.j, o.k);
            g.set(o.i, o.j, o.k, prev + eta * (o.value - prev));
        }
        x = truncate_rank(&g, r)?;
    }
    Ok(x)
}

/// Two-stage completion: complete the row slab and the column slab
/// independently at rank r, then join them through the core block with a
/// t-CUR product. Sub-solver failures are wrapped with the slab name.
pub fn tstc(plan: &CcsPlan, r: usize, sub: &dyn SubSolver) -> Result<DenseTensor3> {
    if !plan.is_captured() {
        return Err(Error::Parameter(
            "plan carries no captured values; fill them from a data tensor first".into(),
        ));
    }
    let maps = Maps::build(plan)?;
    let (n1, n2, n3) = plan.shape();
    let si = maps.i_list.len();
    let sj = maps.j_list.len();
    if r < 1 || r > si.min(sj) {
        return Err(Error::Parameter(format!(
            "target rank {r} outside 1..=min(|I|, |J|) = {}",
            si.min(sj)
        )));
    }

    let localize = |entries: &[Observation], rows: bool| -> Vec<Observation> {
        entries
            .iter()
            .map(|o| Observation {
                i: if rows {
                    maps.row_pos[o.i].expect("row observation off the I rows")
                } else {
                    o.i
                },
                j: if rows {
                    o.j
                } else {
                    maps.col_pos[o.j].expect("column observation off the J columns")
                },
                k: o.k,
                value: o.value,
            })
            .collect()
    };

    let obs_r = ObservationSet::from_entries((si, n2, n3), localize(plan.omega_r().entries(), true), true)?;
    let r_slab = sub
        .complete(&obs_r, r)
        .map_err(|e| Error::SubSolver {
            slab: 'R',
            source: Box::new(e),
        })?;
    if r_slab.dims() != (si, n2, n3) {
        return Err(Error::Shape(format!(
            "sub-solver returned {:?} for the {si}x{n2}x{n3} row slab",
            r_slab.dims()
        )));
    }

    let obs_c = ObservationSet::from_entries((n1, sj, n3), localize(plan.omega_c().entries(), false), true)?;
    let c_slab = sub
        .complete(&obs_c, r)
        .map_err(|e| Error::SubSolver {
            slab: 'C',
            source: Box::new(e),
        })?;
    if c_slab.dims() != (n1, sj, n3) {
        return Err(Error::Shape(format!(
            "sub-solver returned {:?} for the {n1}x{sj}x{n3} column slab",
            c_slab.dims()
        )));
    }

    // Core = the I rows of the completed column slab.
    let u = subtensor(&c_slab, Some(plan.i_set()), None)?;
    let mid = tprod(&tpinv(&u, None)?, &r_slab)?;
    tprod(&c_slab, &mid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{bernoulli_mask, make_ccs_plan};
    use crate::spectral::ranks;
    use crate::tcur::{check_exact, cur_reconstruct, extract_cur};
    use crate::testutil::{random_lowrank, rel_err};

    fn captured_plan(
        t: &DenseTensor3,
        size_i: usize,
        size_j: usize,
        p_r: f64,
        p_c: f64,
        seed: u64,
    ) -> CcsPlan {
        let mut plan =
            make_ccs_plan(t.dims(), size_i, size_j, p_r, p_c, false, seed).unwrap();
        plan.capture(t).unwrap();
        plan
    }

    /// A low-rank instance whose cross at seed-chosen I, J preserves every
    /// spectral rank, so its exact CUR decomposition reproduces it.
    fn exact_instance(
        n1: usize,
        n2: usize,
        n3: usize,
        r: usize,
        si: usize,
        sj: usize,
    ) -> (DenseTensor3, IndexSet, IndexSet) {
        for seed in 0..40 {
            let t = random_lowrank(n1, n2, n3, r, 900 + seed);
            let i_set = IndexSet::without_replacement((0..si).collect(), n1).unwrap();
            let j_set = IndexSet::without_replacement((0..sj).collect(), n2).unwrap();
            let f = extract_cur(&t, &i_set, &j_set).unwrap();
            if check_exact(&f, &t, None).unwrap().exact {
                return (t, i_set, j_set);
            }
        }
        panic!("no rank-preserving cross found in 40 seeds");
    }

    fn cross_plan(t: &DenseTensor3, i_set: &IndexSet, j_set: &IndexSet) -> CcsPlan {
        let (n1, n2, n3) = t.dims();
        let mut row_coords = Vec::new();
        for &i in i_set.indices() {
            for j in 0..n2 {
                for k in 0..n3 {
                    row_coords.push((i, j, k));
                }
            }
        }
        let mut col_coords = Vec::new();
        for i in 0..n1 {
            for &j in j_set.indices() {
                for k in 0..n3 {
                    col_coords.push((i, j, k));
                }
            }
        }
        let mut plan = CcsPlan::from_parts(
            t.dims(),
            i_set.clone(),
            j_set.clone(),
            ObservationSet::from_coords(t.dims(), row_coords, true).unwrap(),
            ObservationSet::from_coords(t.dims(), col_coords, true).unwrap(),
            1.0,
            1.0,
            0,
            false,
        )
        .unwrap();
        plan.capture(t).unwrap();
        plan
    }

    #[test]
    fn stopping_e_matches_a_hand_computation() {
        // T = [[1, 2], [3, 4]], I = {0}, J = {0}; row slab observes both
        // entries of row 0, the column slab observes (1, 0). An iterate
        // matching everything except a zero at (0, 1) misses 2^2 of the
        // observed energy 1 + 4 + 9.
        let t = DenseTensor3::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let i_set = IndexSet::without_replacement(vec![0], 2).unwrap();
        let j_set = IndexSet::without_replacement(vec![0], 2).unwrap();
        let omega_r =
            ObservationSet::from_coords((2, 2, 1), vec![(0, 0, 0), (0, 1, 0)], true).unwrap();
        let omega_c = ObservationSet::from_coords((2, 2, 1), vec![(1, 0, 0)], true).unwrap();
        let mut plan = CcsPlan::from_parts(
            (2, 2, 1),
            i_set,
            j_set,
            omega_r,
            omega_c,
            1.0,
            1.0,
            0,
            false,
        )
        .unwrap();
        plan.capture(&t).unwrap();

        let u = DenseTensor3::from_vec(1, 1, 1, vec![1.0]).unwrap();
        let tc = DenseTensor3::from_vec(1, 1, 1, vec![3.0]).unwrap();
        let tr = DenseTensor3::from_vec(1, 1, 1, vec![0.0]).unwrap();
        let blocks = EstimateBlocks::new(&plan, Some(tc), Some(tr), u).unwrap();
        let e = stopping_e(&plan, &blocks).unwrap();
        assert!((e - 2.0 / 7.0).abs() < 1e-15, "e = {e}");

        // the zero iterate scores exactly 1
        let zeros = EstimateBlocks::new(
            &plan,
            Some(DenseTensor3::zeros(1, 1, 1).unwrap()),
            Some(DenseTensor3::zeros(1, 1, 1).unwrap()),
            DenseTensor3::zeros(1, 1, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(stopping_e(&plan, &zeros).unwrap(), 1.0);

        // an iterate agreeing on every observation scores 0
        let exact = EstimateBlocks::new(
            &plan,
            Some(DenseTensor3::from_vec(1, 1, 1, vec![3.0]).unwrap()),
            Some(DenseTensor3::from_vec(1, 1, 1, vec![2.0]).unwrap()),
            DenseTensor3::from_vec(1, 1, 1, vec![1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(stopping_e(&plan, &exact).unwrap(), 0.0);
    }

    #[test]
    fn stopping_e_requires_captured_values() {
        let plan = make_ccs_plan((4, 4, 2), 2, 2, 0.5, 0.5, false, 3).unwrap();
        let blocks = EstimateBlocks::new(
            &plan,
            Some(DenseTensor3::zeros(2, 2, 2).unwrap()),
            Some(DenseTensor3::zeros(2, 2, 2).unwrap()),
            DenseTensor3::zeros(2, 2, 2).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            stopping_e(&plan, &blocks),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn exact_factors_are_a_fixed_point() {
        let (t, i_set, j_set) = exact_instance(20, 18, 4, 2, 6, 6);
        let plan = cross_plan(&t, &i_set, &j_set);
        let f = extract_cur(&t, &i_set, &j_set).unwrap();
        let state = ItcurtcState::from_factors(&f, &plan, 2).unwrap();
        let cfg = SolverConfig::new(2);
        let (next, e) = itcurtc_step(&state, &plan, &cfg).unwrap();
        assert!(e < 1e-16, "residual at the fixed point: {e}");
        assert!(rel_err(next.u(), state.u()) < 1e-10);
        assert!(rel_err(next.c(), state.c()) < 1e-10);
        assert!(rel_err(next.r(), state.r()) < 1e-10);
    }

    #[test]
    fn first_step_with_unit_rates_truncates_the_observed_core() {
        let (t, i_set, j_set) = exact_instance(14, 13, 3, 2, 5, 5);
        let plan = cross_plan(&t, &i_set, &j_set);
        let mut cfg = SolverConfig::new(2);
        cfg.eta_r = Some(1.0);
        cfg.eta_c = Some(1.0);
        cfg.eta_u = Some(1.0);
        let state = ItcurtcState::zeros(&plan).unwrap();
        let (next, e0) = itcurtc_step(&state, &plan, &cfg).unwrap();
        // the zero iterate misses all of the observed energy
        assert_eq!(e0, 1.0);
        // with a fully observed core and unit step, the new core is exactly
        // H_r of the data's core block
        let core = subtensor(&t, Some(&i_set), Some(&j_set)).unwrap();
        let expected = truncate_rank(&core, 2).unwrap();
        assert!(rel_err(next.u(), &expected) < 1e-12);
    }

    #[test]
    fn step_sequence_replays_the_driver_history() {
        let t = random_lowrank(16, 15, 3, 2, 41);
        let plan = captured_plan(&t, 6, 6, 0.6, 0.6, 7);
        let mut cfg = SolverConfig::new(2);
        cfg.tol = 1e-300;
        cfg.max_iter = 4;
        let (_, report) = itcurtc(&plan, &cfg).unwrap();
        assert_eq!(report.iterations, 4);

        let mut state = ItcurtcState::zeros(&plan).unwrap();
        let mut replayed = Vec::new();
        for _ in 0..4 {
            let (next, e) = itcurtc_step(&state, &plan, &cfg).unwrap();
            replayed.push(e);
            state = next;
        }
        assert_eq!(report.e_history, replayed);
    }

    #[test]
    fn fully_observed_low_rank_converges_immediately() {
        let t = random_lowrank(12, 12, 3, 2, 5);
        let plan = captured_plan(&t, 12, 12, 1.0, 1.0, 5);
        let cfg = SolverConfig::new(2);
        let (f, report) = itcurtc(&plan, &cfg).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 5, "took {} passes", report.iterations);
        assert!(*report.e_history.last().unwrap() <= cfg.tol);
        let rebuilt = cur_reconstruct(&f).unwrap();
        assert!(rel_err(&rebuilt, &t) < 1e-8);
    }

    #[test]
    fn no_observations_returns_the_zero_iterate() {
        let t = random_lowrank(10, 10, 2, 1, 9);
        let plan = captured_plan(&t, 3, 3, 0.0, 0.0, 9);
        let (f, report) = itcurtc(&plan, &SolverConfig::new(2)).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.e_history.is_empty());
        assert!(!report.converged);
        assert!(f.c.values().iter().all(|&v| v == 0.0));
        assert!(f.u.values().iter().all(|&v| v == 0.0));
        assert!(f.r.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oversized_steps_are_reported_as_divergence() {
        let t = random_lowrank(14, 14, 3, 2, 11);
        let plan = captured_plan(&t, 6, 6, 0.5, 0.5, 11);
        let mut cfg = SolverConfig::new(2);
        cfg.eta_r = Some(1e6);
        cfg.eta_c = Some(1e6);
        cfg.eta_u = Some(1e6);
        match itcurtc(&plan, &cfg) {
            Err(Error::Divergence { eta_r, .. }) => assert_eq!(eta_r, 1e6),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_indices_are_rejected() {
        let i_set = IndexSet::with_replacement(vec![3, 3], 10).unwrap();
        let j_set = IndexSet::without_replacement(vec![0, 1], 10).unwrap();
        let empty = ObservationSet::empty((10, 10, 2));
        let plan = CcsPlan::from_parts(
            (10, 10, 2),
            i_set,
            j_set,
            empty.clone(),
            empty,
            0.5,
            0.5,
            0,
            true,
        )
        .unwrap();
        match ItcurtcState::zeros(&plan) {
            Err(Error::Parameter(msg)) => assert!(msg.contains("more than once")),
            other => panic!("expected a parameter error, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn cost_scales_linearly_in_the_free_dimension() {
        let run = |n2: usize| {
            let t = random_lowrank(20, n2, 4, 2, 21);
            let plan = captured_plan(&t, 6, 6, 0.5, 0.5, 21);
            let mut cfg = SolverConfig::new(2);
            cfg.tol = 1e-300;
            cfg.max_iter = 3;
            let (_, report) = itcurtc(&plan, &cfg).unwrap();
            assert_eq!(report.iterations, 3);
            report.multiply_adds as f64
        };
        let narrow = run(120);
        let wide = run(240);
        let ratio = wide / narrow;
        assert!(
            (1.8..=2.2).contains(&ratio),
            "doubling n2 scaled cost by {ratio}"
        );
    }

    #[test]
    fn peak_memory_stays_under_the_cross_budget() {
        let t = random_lowrank(40, 40, 4, 2, 33);
        let plan = captured_plan(&t, 8, 8, 0.5, 0.5, 33);
        let mut cfg = SolverConfig::new(2);
        cfg.tol = 1e-300;
        cfg.max_iter = 3;
        let (_, report) = itcurtc(&plan, &cfg).unwrap();
        let (n1, n2, n3) = t.dims();
        let omega = plan.union_entries().len();
        let budget = 4 * (8 * n2 * n3 + 8 * n1 * n3 + omega);
        assert!(report.peak_live_entries > 0);
        assert!(
            report.peak_live_entries <= budget,
            "peak {} exceeds budget {budget}",
            report.peak_live_entries
        );
    }

    #[test]
    fn iterates_keep_the_core_rank_bounded() {
        let t = random_lowrank(24, 24, 4, 2, 55);
        let plan = captured_plan(&t, 8, 8, 0.6, 0.6, 55);
        let cfg = SolverConfig::new(2);
        let mut state = ItcurtcState::zeros(&plan).unwrap();
        for _ in 0..8 {
            let (next, _) = itcurtc_step(&state, &plan, &cfg).unwrap();
            state = next;
            let mr = ranks(state.u(), None).unwrap();
            assert!(mr.tubal <= 2, "core tubal rank grew to {}", mr.tubal);
        }
    }

    #[test]
    fn desk_scale_runs_converge_with_monotone_tails() {
        let shape = (40, 40, 8);
        let p = crate::sampling::prob_for_alpha(shape, 12, 12, 0.25).unwrap();
        let mut monotone = 0;
        for seed in 0..10u64 {
            let t = random_lowrank(40, 40, 8, 2, 700 + seed);
            let plan = captured_plan(&t, 12, 12, p, p, 700 + seed);
            let mut cfg = SolverConfig::new(2);
            cfg.max_iter = 200;
            // unit steps: the inverse-rate defaults overshoot at slab widths
            // this small (see the divergence test)
            cfg.eta_r = Some(1.0);
            cfg.eta_c = Some(1.0);
            cfg.eta_u = Some(1.0);
            let (f, report) = itcurtc(&plan, &cfg).unwrap();
            assert!(
                report.converged,
                "seed {seed} still at e = {:?} after {} passes",
                report.e_history.last(),
                report.iterations
            );
            let rebuilt = cur_reconstruct(&f).unwrap();
            assert!(rel_err(&rebuilt, &t) < 1e-2, "seed {seed}");
            let tail_ok = report
                .e_history
                .windows(2)
                .skip(5)
                .all(|w| w[1] <= w[0] * (1.0 + 1e-9));
            if tail_ok {
                monotone += 1;
            }
        }
        assert!(monotone >= 9, "only {monotone}/10 runs had monotone tails");
    }

    #[test]
    fn truth_tracking_reports_a_decreasing_error() {
        let t = random_lowrank(20, 20, 4, 2, 77);
        let plan = captured_plan(&t, 8, 8, 0.7, 0.7, 77);
        let mut cfg = SolverConfig::new(2);
        cfg.max_iter = 100;
        cfg.trace = true;
        let mut sink = Vec::new();
        let (_, report) = itcurtc_with(&plan, &cfg, Some(&t), Some(&mut sink)).unwrap();
        let eps = report.eps_history.as_ref().unwrap();
        assert_eq!(eps.len(), report.e_history.len());
        assert!(eps.last().unwrap() < &1e-2);
        // one trace line per pass, each with three comma-separated fields
        let text = String::from_utf8(sink).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), report.iterations);
        assert!(lines.iter().all(|l| l.split(',').count() == 3));
        assert!(lines[0].starts_with("0,"));
    }

    // ----- the two-stage solver -----

    #[test]
    fn iht_single_pass_on_full_observations_is_plain_truncation() {
        let t = random_lowrank(10, 9, 3, 3, 13);
        let mut rng = crate::sampling::rng::PlanRng::from_seed(13);
        let mut obs = bernoulli_mask(t.dims(), 1.0, &mut rng).unwrap();
        obs.fill_values_from(&t).unwrap();
        let x = iht_complete(&obs, 1, 1.0, 1e-12, 1).unwrap();
        let expected = truncate_rank(&t, 1).unwrap();
        assert!(rel_err(&x, &expected) < 1e-15);
    }

    #[test]
    fn iht_recovers_a_rank_one_tensor() {
        let t = random_lowrank(10, 10, 4, 1, 17);
        let mut rng = crate::sampling::rng::PlanRng::from_seed(17);
        let mut obs = bernoulli_mask(t.dims(), 0.7, &mut rng).unwrap();
        obs.fill_values_from(&t).unwrap();
        let eta = (10.0 * 10.0 * 4.0) / obs.len() as f64;
        let x = iht_complete(&obs, 1, eta, 1e-10, 300).unwrap();
        assert!(rel_err(&x, &t) < 1e-4, "error {}", rel_err(&x, &t));
    }

    #[test]
    fn iht_rejects_bad_arguments() {
        let t = random_lowrank(6, 6, 2, 1, 19);
        let mut rng = crate::sampling::rng::PlanRng::from_seed(19);
        let mut obs = bernoulli_mask(t.dims(), 0.5, &mut rng).unwrap();
        obs.fill_values_from(&t).unwrap();
        assert!(matches!(
            iht_complete(&obs, 0, 1.0, 1e-8, 10),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            iht_complete(&obs, 7, 1.0, 1e-8, 10),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            iht_complete(&obs, 1, -1.0, 1e-8, 10),
            Err(Error::Parameter(_))
        ));
        let empty = ObservationSet::empty((6, 6, 2));
        assert!(matches!(
            iht_complete(&empty, 1, 1.0, 1e-8, 10),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn tstc_on_full_slabs_reproduces_an_exact_instance() {
        let (t, i_set, j_set) = exact_instance(16, 16, 4, 2, 6, 6);
        let plan = cross_plan(&t, &i_set, &j_set);
        let out = tstc(&plan, 2, &IhtSubSolver::default()).unwrap();
        assert!(rel_err(&out, &t) < 1e-8, "error {}", rel_err(&out, &t));
    }

    #[test]
    fn tstc_completes_partial_slabs() {
        for seed in 0..3u64 {
            let t = random_lowrank(30, 30, 8, 2, 400 + seed);
            let plan = captured_plan(&t, 10, 10, 0.8, 0.8, 400 + seed);
            let out = tstc(&plan, 2, &IhtSubSolver::default()).unwrap();
            let err = rel_err(&out, &t);
            assert!(err < 1e-3, "seed {seed}: error {err}");
        }
    }

    #[test]
    fn tstc_names_the_failing_slab() {
        let t = random_lowrank(12, 12, 2, 2, 23);
        let plan = captured_plan(&t, 4, 4, 0.0, 0.6, 23);
        match tstc(&plan, 2, &IhtSubSolver::default()) {
            Err(Error::SubSolver { slab, .. }) => assert_eq!(slab, 'R'),
            other => panic!("expected a sub-solver error, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn rank_larger_than_the_cross_is_rejected() {
        let t = random_lowrank(10, 10, 2, 1, 29);
        let plan = captured_plan(&t, 3, 3, 0.5, 0.5, 29);
        assert!(matches!(
            itcurtc(&plan, &SolverConfig::new(4)),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            tstc(&plan, 4, &IhtSubSolver::default()),
            Err(Error::Parameter(_))
        ));
    }
}
