//! Dense third-order tensors and the t-product algebra.
//!
//! A tensor T in R^{n1 x n2 x n3} is stored as n3 contiguous frontal slices,
//! each slice row-major: entry (i, j, k) lives at `k*n1*n2 + i*n2 + j`.
//! Frontal-slice extraction is therefore a contiguous copy, which every
//! slicewise algorithm in this crate relies on.
//!
//! The t-product T * S is ordinary matrix multiplication of the block
//! circulant expansion, `fold(bcirc(T) . unfold(S))`. `bcirc` materializes
//! an (n1 n3) x (n2 n3) matrix and exists for tests and small diagnostics
//! only; `tprod` computes the same thing through the mode-3 DFT route in
//! [`crate::spectral`] without ever forming the circulant.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Entry cap for [`bcirc`]: refuse to materialize above 10^8 entries.
pub const BCIRC_DEFAULT_CAP: usize = 100_000_000;

// ---------------------------------------------------------------------------
// storage
// ---------------------------------------------------------------------------

/// Dense real third-order tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor3 {
    n1: usize,
    n2: usize,
    n3: usize,
    data: Vec<f64>,
}

impl DenseTensor3 {
    /// Build from raw values laid out as documented in the module docs.
    pub fn from_vec(n1: usize, n2: usize, n3: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(n1, n2, n3)?;
        if data.len() != n1 * n2 * n3 {
            return Err(Error::Shape(format!(
                "value buffer has {} entries, dims {}x{}x{} need {}",
                data.len(),
                n1,
                n2,
                n3,
                n1 * n2 * n3
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value {} at flat offset {pos}",
                data[pos]
            )));
        }
        Ok(DenseTensor3 { n1, n2, n3, data })
    }

    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Result<Self> {
        check_dims(n1, n2, n3)?;
        Ok(DenseTensor3 {
            n1,
            n2,
            n3,
            data: vec![0.0; n1 * n2 * n3],
        })
    }

    /// Build entrywise from `f(i, j, k)`.
    pub fn from_fn(
        n1: usize,
        n2: usize,
        n3: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(n1, n2, n3)?;
        let mut data = Vec::with_capacity(n1 * n2 * n3);
        for k in 0..n3 {
            for i in 0..n1 {
                for j in 0..n2 {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::from_vec(n1, n2, n3, data)
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n1, self.n2, self.n3)
    }

    #[inline]
    pub fn n1(&self) -> usize {
        self.n1
    }

    #[inline]
    pub fn n2(&self) -> usize {
        self.n2
    }

    #[inline]
    pub fn n3(&self) -> usize {
        self.n3
    }

    /// Total number of entries.
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false // dims are positive by construction
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.n1 && j < self.n2 && k < self.n3);
        k * self.n1 * self.n2 + i * self.n2 + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        debug_assert!(v.is_finite());
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Frontal slice [T]_{:,:,k} as an n1 x n2 matrix. O(n1 n2) copy.
    pub fn frontal_slice(&self, k: usize) -> DMatrix<f64> {
        assert!(k < self.n3, "slice index {k} out of range {}", self.n3);
        let base = k * self.n1 * self.n2;
        DMatrix::from_fn(self.n1, self.n2, |i, j| self.data[base + i * self.n2 + j])
    }

    pub fn set_frontal_slice(&mut self, k: usize, m: &DMatrix<f64>) {
        assert!(k < self.n3, "slice index {k} out of range {}", self.n3);
        assert_eq!((m.nrows(), m.ncols()), (self.n1, self.n2), "slice shape");
        let base = k * self.n1 * self.n2;
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                self.data[base + i * self.n2 + j] = m[(i, j)];
            }
        }
    }

    /// Entrywise `self + alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseTensor3) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "axpy dims {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }
}

fn check_dims(n1: usize, n2: usize, n3: usize) -> Result<()> {
    if n1 == 0 || n2 == 0 || n3 == 0 {
        return Err(Error::Parameter(format!(
            "tensor dims must be positive, got {n1}x{n2}x{n3}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// index sets
// ---------------------------------------------------------------------------

/// Ordered set of 0-based indices into one tensor mode.
///
/// Duplicates are legal only when the set was produced by with-replacement
/// sampling; the flag records which regime built it.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexSet {
    indices: Vec<usize>,
    bound: usize,
    with_replacement: bool,
}

impl IndexSet {
    /// Distinct indices; rejects duplicates and out-of-range values.
    pub fn without_replacement(indices: Vec<usize>, bound: usize) -> Result<Self> {
        Self::check_range(&indices, bound)?;
        let mut seen = vec![false; bound];
        for &ix in &indices {
            if seen[ix] {
                return Err(Error::Parameter(format!(
                    "duplicate index {ix} in a without-replacement index set"
                )));
            }
            seen[ix] = true;
        }
        Ok(IndexSet {
            indices,
            bound,
            with_replacement: false,
        })
    }

    /// Possibly repeated indices from with-replacement sampling.
    pub fn with_replacement(indices: Vec<usize>, bound: usize) -> Result<Self> {
        Self::check_range(&indices, bound)?;
        Ok(IndexSet {
            indices,
            bound,
            with_replacement: true,
        })
    }

    /// The full range 0..bound.
    pub fn full(bound: usize) -> Self {
        IndexSet {
            indices: (0..bound).collect(),
            bound,
            with_replacement: false,
        }
    }

    fn check_range(indices: &[usize], bound: usize) -> Result<()> {
        if let Some(&bad) = indices.iter().find(|&&ix| ix >= bound) {
            return Err(Error::Parameter(format!(
                "index {bad} out of range for bound {bound}"
            )));
        }
        Ok(())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_with_replacement(&self) -> bool {
        self.with_replacement
    }

    pub fn contains(&self, ix: usize) -> bool {
        self.indices.contains(&ix)
    }

    /// Membership table of size `bound`.
    pub fn membership(&self) -> Vec<bool> {
        let mut m = vec![false; self.bound];
        for &ix in &self.indices {
            m[ix] = true;
        }
        m
    }

    /// Sorted indices of 0..bound not present in the set.
    pub fn complement(&self) -> Vec<usize> {
        let m = self.membership();
        (0..self.bound).filter(|&ix| !m[ix]).collect()
    }
}

// ---------------------------------------------------------------------------
// unfold / fold / bcirc
// ---------------------------------------------------------------------------

/// Stack frontal slices vertically: slice k occupies rows k*n1 .. (k+1)*n1.
pub fn unfold(t: &DenseTensor3) -> DMatrix<f64> {
    let (n1, n2, n3) = t.dims();
    DMatrix::from_fn(n1 * n3, n2, |row, j| t.get(row % n1, j, row / n1))
}

/// Inverse of [`unfold`] for the given dims.
pub fn fold(m: &DMatrix<f64>, dims: (usize, usize, usize)) -> Result<DenseTensor3> {
    let (n1, n2, n3) = dims;
    check_dims(n1, n2, n3)?;
    if m.nrows() != n1 * n3 || m.ncols() != n2 {
        return Err(Error::Shape(format!(
            "fold expects {}x{} matrix for dims {n1}x{n2}x{n3}, got {}x{}",
            n1 * n3,
            n2,
            m.nrows(),
            m.ncols()
        )));
    }
    DenseTensor3::from_fn(n1, n2, n3, |i, j, k| m[(k * n1 + i, j)])
}

/// Block circulant expansion; block (a, b) is frontal slice (a - b) mod n3.
///
/// Test/diagnostic oracle only: O(n1 n2 n3^2) entries, refused above `cap`.
pub fn bcirc_with_cap(t: &DenseTensor3, cap: usize) -> Result<DMatrix<f64>> {
    let (n1, n2, n3) = t.dims();
    let entries = n1
        .checked_mul(n3)
        .and_then(|r| r.checked_mul(n2))
        .and_then(|r| r.checked_mul(n3))
        .ok_or_else(|| Error::Parameter("bcirc size overflows usize".into()))?;
    if entries > cap {
        return Err(Error::Parameter(format!(
            "bcirc would hold {entries} entries, above the cap of {cap}"
        )));
    }
    Ok(DMatrix::from_fn(n1 * n3, n2 * n3, |row, col| {
        let (a, i) = (row / n1, row % n1);
        let (b, j) = (col / n2, col % n2);
        let k = (a + n3 - b) % n3;
        t.get(i, j, k)
    }))
}

/// [`bcirc_with_cap`] at the default 10^8-entry cap.
pub fn bcirc(t: &DenseTensor3) -> Result<DMatrix<f64>> {
    bcirc_with_cap(t, BCIRC_DEFAULT_CAP)
}

// ---------------------------------------------------------------------------
// t-product and friends
// ---------------------------------------------------------------------------

/// t-product a * b, via the mode-3 DFT (never materializes bcirc).
pub fn tprod(a: &DenseTensor3, b: &DenseTensor3) -> Result<DenseTensor3> {
    let (a1, a2, a3) = a.dims();
    let (b1, b2, b3) = b.dims();
    if a2 != b1 || a3 != b3 {
        return Err(Error::Shape(format!(
            "tprod dims {a1}x{a2}x{a3} * {b1}x{b2}x{b3}: need a.n2 == b.n1 and equal n3"
        )));
    }
    crate::spectral::tprod_via_dft(a, b)
}

/// Tensor transpose: each frontal slice transposed, slices 2..n3 reversed.
pub fn ttranspose(t: &DenseTensor3) -> DenseTensor3 {
    let (n1, n2, n3) = t.dims();
    DenseTensor3::from_fn(n2, n1, n3, |i, j, k| {
        let src_k = if k == 0 { 0 } else { n3 - k };
        t.get(j, i, src_k)
    })
    .expect("dims already validated")
}

/// Identity tensor: first frontal slice I_n, the rest zero.
pub fn identity_tensor(n: usize, n3: usize) -> Result<DenseTensor3> {
    let mut t = DenseTensor3::zeros(n, n, n3)?;
    for i in 0..n {
        t.set(i, i, 0, 1.0);
    }
    Ok(t)
}

/// Entrywise norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    /// sqrt of the sum of squared entries.
    Frobenius,
    /// Largest absolute entry.
    Infinity,
    /// l_{inf,2}: largest Frobenius norm over horizontal slabs [T]_{i,:,:}
    /// and lateral slabs [T]_{:,j,:}.
    Inf2,
}

pub fn norm(t: &DenseTensor3, kind: NormKind) -> f64 {
    match kind {
        NormKind::Frobenius => t.values().iter().map(|v| v * v).sum::<f64>().sqrt(),
        NormKind::Infinity => t.values().iter().fold(0.0, |m, v| m.max(v.abs())),
        NormKind::Inf2 => {
            let (n1, n2, n3) = t.dims();
            let mut row_sq = vec![0.0f64; n1];
            let mut col_sq = vec![0.0f64; n2];
            for k in 0..n3 {
                for i in 0..n1 {
                    for j in 0..n2 {
                        let v = t.get(i, j, k);
                        row_sq[i] += v * v;
                        col_sq[j] += v * v;
                    }
                }
            }
            let best = row_sq
                .iter()
                .chain(col_sq.iter())
                .fold(0.0f64, |m, &s| m.max(s));
            best.sqrt()
        }
    }
}

pub fn frobenius(t: &DenseTensor3) -> f64 {
    norm(t, NormKind::Frobenius)
}

/// Frobenius inner product.
pub fn inner_product(a: &DenseTensor3, b: &DenseTensor3) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "inner_product dims {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(a.values()
        .iter()
        .zip(b.values().iter())
        .map(|(x, y)| x * y)
        .sum())
}

/// Row/column restriction [T]_{I,J,:}; `None` keeps the full mode.
/// Index-set order is preserved, including duplicates.
pub fn subtensor(
    t: &DenseTensor3,
    rows: Option<&IndexSet>,
    cols: Option<&IndexSet>,
) -> Result<DenseTensor3> {
    let (n1, n2, n3) = t.dims();
    if let Some(r) = rows {
        if r.bound() != n1 {
            return Err(Error::Parameter(format!(
                "row index set bound {} does not match n1 = {n1}",
                r.bound()
            )));
        }
    }
    if let Some(c) = cols {
        if c.bound() != n2 {
            return Err(Error::Parameter(format!(
                "column index set bound {} does not match n2 = {n2}",
                c.bound()
            )));
        }
    }
    let row_ix: Vec<usize> = match rows {
        Some(r) => r.indices().to_vec(),
        None => (0..n1).collect(),
    };
    let col_ix: Vec<usize> = match cols {
        Some(c) => c.indices().to_vec(),
        None => (0..n2).collect(),
    };
    if row_ix.is_empty() || col_ix.is_empty() {
        return Err(Error::Parameter(
            "subtensor with an empty index set has zero size".into(),
        ));
    }
    DenseTensor3::from_fn(row_ix.len(), col_ix.len(), n3, |i, j, k| {
        t.get(row_ix[i], col_ix[j], k)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng::PlanRng;
    use approx::assert_relative_eq;

    pub(crate) fn random_tensor(n1: usize, n2: usize, n3: usize, seed: u64) -> DenseTensor3 {
        let mut rng = PlanRng::from_seed(seed);
        DenseTensor3::from_fn(n1, n2, n3, |_, _, _| rng.normal()).unwrap()
    }

    fn rel_close(a: &DenseTensor3, b: &DenseTensor3, tol: f64) {
        assert_eq!(a.dims(), b.dims());
        let mut diff = 0.0f64;
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            diff += (x - y) * (x - y);
        }
        let scale = frobenius(b).max(1e-300);
        assert!(
            diff.sqrt() / scale < tol,
            "relative error {} above {tol}",
            diff.sqrt() / scale
        );
    }

    #[test]
    fn constructor_validates() {
        assert!(DenseTensor3::from_vec(0, 2, 2, vec![]).is_err());
        assert!(DenseTensor3::from_vec(2, 2, 2, vec![0.0; 7]).is_err());
        assert!(DenseTensor3::from_vec(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(DenseTensor3::from_vec(1, 1, 1, vec![f64::INFINITY]).is_err());
        assert!(DenseTensor3::from_vec(1, 1, 1, vec![5.0]).is_ok());
    }

    #[test]
    fn layout_slice_major() {
        // entry (i,j,k) at k*n1*n2 + i*n2 + j
        let t = DenseTensor3::from_fn(2, 3, 2, |i, j, k| (100 * k + 10 * i + j) as f64).unwrap();
        assert_eq!(t.values()[0], 0.0); // (0,0,0)
        assert_eq!(t.values()[1], 1.0); // (0,1,0)
        assert_eq!(t.values()[3], 10.0); // (1,0,0)
        assert_eq!(t.values()[6], 100.0); // (0,0,1)
        assert_eq!(t.get(1, 2, 1), 112.0);
    }

    #[test]
    fn unfold_scalar_and_roundtrip() {
        let t = DenseTensor3::from_vec(1, 1, 1, vec![5.0]).unwrap();
        let m = unfold(&t);
        assert_eq!((m.nrows(), m.ncols()), (1, 1));
        assert_eq!(m[(0, 0)], 5.0);
        assert_eq!(fold(&m, (1, 1, 1)).unwrap(), t);

        let t = random_tensor(3, 4, 2, 11);
        let back = fold(&unfold(&t), (3, 4, 2)).unwrap();
        assert_eq!(back.values(), t.values()); // bit-identical
    }

    #[test]
    fn unfold_stacks_slices_vertically() {
        let t = random_tensor(3, 4, 3, 12);
        let m = unfold(&t);
        // slice 1 (0-based) occupies rows n1..2n1
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(m[(3 + i, j)], t.get(i, j, 1));
            }
        }
    }

    #[test]
    fn fold_rejects_bad_shapes() {
        let m = DMatrix::<f64>::zeros(6, 4);
        assert!(fold(&m, (3, 4, 2)).is_ok());
        assert!(fold(&m, (3, 4, 3)).is_err());
        assert!(fold(&m, (3, 5, 2)).is_err());
    }

    #[test]
    fn bcirc_single_slice_is_the_slice() {
        let t = random_tensor(3, 2, 1, 13);
        let b = bcirc(&t).unwrap();
        assert_eq!(b, t.frontal_slice(0));
    }

    #[test]
    fn bcirc_tube_circulant_hand_value() {
        // tubes (a, b, c) -> [[a, c, b], [b, a, c], [c, b, a]]
        let (a, b, c) = (2.0, -3.0, 7.0);
        let t = DenseTensor3::from_vec(1, 1, 3, vec![a, b, c]).unwrap();
        let m = bcirc(&t).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[a, c, b, b, a, c, c, b, a]);
        assert_eq!(m, expect);
    }

    #[test]
    fn bcirc_of_identity_is_identity_matrix() {
        let id = identity_tensor(4, 3).unwrap();
        let m = bcirc(&id).unwrap();
        assert_eq!(m, DMatrix::<f64>::identity(12, 12));
    }

    #[test]
    fn bcirc_cap_guard() {
        let t = random_tensor(4, 4, 4, 14);
        assert!(bcirc_with_cap(&t, 255).is_err());
        assert!(bcirc_with_cap(&t, 256).is_ok());
    }

    #[test]
    fn tprod_matches_bcirc_oracle() {
        let a = random_tensor(4, 3, 5, 15);
        let b = random_tensor(3, 2, 5, 16);
        let direct = fold(&(bcirc(&a).unwrap() * unfold(&b)), (4, 2, 5)).unwrap();
        let fast = tprod(&a, &b).unwrap();
        rel_close(&fast, &direct, 1e-10);
    }

    #[test]
    fn tprod_identity_and_flat_case() {
        let t = random_tensor(4, 3, 5, 17);
        let id = identity_tensor(3, 5).unwrap();
        rel_close(&tprod(&t, &id).unwrap(), &t, 1e-12);
        let idl = identity_tensor(4, 5).unwrap();
        rel_close(&tprod(&idl, &t).unwrap(), &t, 1e-12);

        // n3 = 1 reduces to a plain matrix product
        let a = random_tensor(3, 4, 1, 18);
        let b = random_tensor(4, 2, 1, 19);
        let m = a.frontal_slice(0) * b.frontal_slice(0);
        let p = tprod(&a, &b).unwrap();
        rel_close(&p, &fold(&m, (3, 2, 1)).unwrap(), 1e-12);
    }

    #[test]
    fn tprod_shape_errors() {
        let a = random_tensor(3, 4, 2, 20);
        let b = random_tensor(3, 4, 2, 21);
        assert!(tprod(&a, &b).is_err()); // inner mismatch 4 vs 3
        let c = random_tensor(4, 2, 3, 22);
        assert!(tprod(&a, &c).is_err()); // n3 mismatch
    }

    #[test]
    fn ttranspose_involution_and_oracle() {
        let t = random_tensor(3, 4, 4, 23);
        let tt = ttranspose(&ttranspose(&t));
        assert_eq!(tt.values(), t.values());

        let b = bcirc(&t).unwrap();
        let bt = bcirc(&ttranspose(&t)).unwrap();
        assert_eq!(bt, b.transpose());

        // n3 = 1: plain transpose
        let m = random_tensor(3, 4, 1, 24);
        assert_eq!(ttranspose(&m).frontal_slice(0), m.frontal_slice(0).transpose());
    }

    #[test]
    fn identity_tensor_shape_and_symmetry() {
        let id = identity_tensor(1, 1).unwrap();
        assert_eq!(id.values(), &[1.0]);
        let id = identity_tensor(3, 4).unwrap();
        assert_eq!(ttranspose(&id), id);
    }

    #[test]
    fn norms_trivial_cases() {
        let z = DenseTensor3::zeros(2, 3, 2).unwrap();
        for kind in [NormKind::Frobenius, NormKind::Infinity, NormKind::Inf2] {
            assert_eq!(norm(&z, kind), 0.0);
        }
        let s = DenseTensor3::from_vec(1, 1, 1, vec![-2.0]).unwrap();
        for kind in [NormKind::Frobenius, NormKind::Infinity, NormKind::Inf2] {
            assert_eq!(norm(&s, kind), 2.0);
        }
    }

    #[test]
    fn frobenius_matches_bcirc_scaled() {
        let t = random_tensor(3, 3, 4, 25);
        let b = bcirc(&t).unwrap();
        let bf = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_relative_eq!(frobenius(&t), bf / (4.0f64).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn inf2_hand_value() {
        // 2x2x1: rows (3,4) and (0,0); cols (3,0) and (4,0)
        let t = DenseTensor3::from_vec(2, 2, 1, vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(norm(&t, NormKind::Inf2), 5.0, max_relative = 1e-15);
    }

    #[test]
    fn inner_product_cases() {
        let t = random_tensor(3, 4, 2, 26);
        let f = frobenius(&t);
        assert_relative_eq!(inner_product(&t, &t).unwrap(), f * f, max_relative = 1e-12);

        let mut e1 = DenseTensor3::zeros(2, 2, 2).unwrap();
        let mut e2 = DenseTensor3::zeros(2, 2, 2).unwrap();
        e1.set(0, 0, 0, 1.0);
        e2.set(1, 1, 1, 1.0);
        assert_eq!(inner_product(&e1, &e2).unwrap(), 0.0);

        let a = random_tensor(3, 4, 2, 27);
        let b = random_tensor(3, 4, 2, 28);
        let tr = (bcirc(&b).unwrap().transpose() * bcirc(&a).unwrap()).trace();
        assert_relative_eq!(
            inner_product(&a, &b).unwrap(),
            tr / 2.0,
            max_relative = 1e-12
        );

        let c = random_tensor(3, 3, 2, 29);
        assert!(inner_product(&a, &c).is_err());
    }

    #[test]
    fn index_set_rules() {
        assert!(IndexSet::without_replacement(vec![0, 2, 1], 3).is_ok());
        assert!(IndexSet::without_replacement(vec![0, 0], 3).is_err());
        assert!(IndexSet::without_replacement(vec![3], 3).is_err());
        let ws = IndexSet::with_replacement(vec![1, 1, 2], 3).unwrap();
        assert!(ws.is_with_replacement());
        assert_eq!(ws.len(), 3);
        assert!(IndexSet::with_replacement(vec![5], 3).is_err());

        let s = IndexSet::without_replacement(vec![0, 3], 5).unwrap();
        assert_eq!(s.complement(), vec![1, 2, 4]);
        assert!(s.contains(3));
        assert!(!s.contains(1));
    }

    #[test]
    fn subtensor_cases() {
        let t = random_tensor(4, 5, 3, 30);
        let full = subtensor(&t, Some(&IndexSet::full(4)), None).unwrap();
        assert_eq!(full.values(), t.values());

        let rows = IndexSet::without_replacement(vec![2, 0], 4).unwrap();
        let cols = IndexSet::without_replacement(vec![4], 5).unwrap();
        let sub = subtensor(&t, Some(&rows), Some(&cols)).unwrap();
        assert_eq!(sub.dims(), (2, 1, 3));
        for k in 0..3 {
            assert_eq!(sub.get(0, 0, k), t.get(2, 4, k));
            assert_eq!(sub.get(1, 0, k), t.get(0, 4, k));
        }

        // single row + single col -> 1x1xn3 tube
        let r1 = IndexSet::without_replacement(vec![1], 4).unwrap();
        let c1 = IndexSet::without_replacement(vec![2], 5).unwrap();
        let tube = subtensor(&t, Some(&r1), Some(&c1)).unwrap();
        assert_eq!(tube.dims(), (1, 1, 3));

        // out-of-bound index set
        let wrong = IndexSet::without_replacement(vec![1], 7).unwrap();
        assert!(subtensor(&t, Some(&wrong), None).is_err());
    }

    #[test]
    fn subtensor_matches_sampling_tensor_product() {
        // [T]_{I,:,:} == S_I * T with S_I = [identity]_{I,:,:}
        let t = random_tensor(5, 4, 3, 31);
        let rows = IndexSet::without_replacement(vec![3, 1, 4], 5).unwrap();
        let id = identity_tensor(5, 3).unwrap();
        let s_i = subtensor(&id, Some(&rows), None).unwrap();
        let via_prod = tprod(&s_i, &t).unwrap();
        let direct = subtensor(&t, Some(&rows), None).unwrap();
        rel_close(&direct, &via_prod, 1e-12);
    }

    #[test]
    fn duplicate_rows_preserved_in_subtensor() {
        let t = random_tensor(3, 3, 2, 32);
        let rows = IndexSet::with_replacement(vec![1, 1], 3).unwrap();
        let sub = subtensor(&t, Some(&rows), None).unwrap();
        assert_eq!(sub.dims(), (2, 3, 2));
        for k in 0..2 {
            for j in 0..3 {
                assert_eq!(sub.get(0, j, k), sub.get(1, j, k));
            }
        }
    }
}
