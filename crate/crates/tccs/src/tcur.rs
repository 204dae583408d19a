//! Exact t-CUR decomposition: T = C * U^dagger * R from slice subtensors.
//!
//! C = [T]_{:,J,:}, R = [T]_{I,:,:}, U = [T]_{I,J,:}. Equality holds exactly
//! when the multi-rank of C and of R both equal the multi-rank of T; the
//! check below tests that condition and the reconstruction error side by
//! side so the equivalence can be exercised on random instances.

use crate::spectral::{ranks, tpinv};
use crate::tensor::{frobenius, subtensor, tprod, DenseTensor3, IndexSet};
use crate::{Error, Result};

/// Slice-sampled factors of one tensor. Duplicate indices (with-replacement
/// selection) are allowed; the pseudoinverse absorbs repeated rows.
#[derive(Clone, Debug)]
pub struct CurFactors {
    pub c: DenseTensor3,
    pub u: DenseTensor3,
    pub r: DenseTensor3,
    pub i_set: IndexSet,
    pub j_set: IndexSet,
}

impl CurFactors {
    /// Shape of the tensor the factors reconstruct.
    pub fn full_dims(&self) -> (usize, usize, usize) {
        (self.c.n1(), self.r.n2(), self.c.n3())
    }
}

pub fn extract_cur(t: &DenseTensor3, i_set: &IndexSet, j_set: &IndexSet) -> Result<CurFactors> {
    if i_set.bound() != t.n1() || j_set.bound() != t.n2() {
        return Err(Error::Parameter(format!(
            "index-set bounds ({}, {}) do not match tensor {}x{}x{}",
            i_set.bound(),
            j_set.bound(),
            t.n1(),
            t.n2(),
            t.n3()
        )));
    }
    Ok(CurFactors {
        c: subtensor(t, None, Some(j_set))?,
        u: subtensor(t, Some(i_set), Some(j_set))?,
        r: subtensor(t, Some(i_set), None)?,
        i_set: i_set.clone(),
        j_set: j_set.clone(),
    })
}

/// C * U^dagger * R.
pub fn cur_reconstruct(f: &CurFactors) -> Result<DenseTensor3> {
    let u_pinv = tpinv(&f.u, None)?;
    tprod(&f.c, &tprod(&u_pinv, &f.r)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactnessCheck {
    /// Relative reconstruction error within tolerance.
    pub exact: bool,
    /// Multi-rank of C and of R both equal the multi-rank of t.
    pub multirank_match: bool,
}

pub const DEFAULT_EXACT_TOL: f64 = 1e-7;

/// Evaluate both sides of the exactness equivalence on a concrete instance.
pub fn check_exact(f: &CurFactors, t: &DenseTensor3, tol: Option<f64>) -> Result<ExactnessCheck> {
    let tol = tol.unwrap_or(DEFAULT_EXACT_TOL);
    if f.full_dims() != t.dims() {
        return Err(Error::Shape(format!(
            "factors reconstruct {:?} but tensor is {:?}",
            f.full_dims(),
            t.dims()
        )));
    }
    let rank_t = ranks(t, None)?;
    let rank_c = ranks(&f.c, None)?;
    let rank_r = ranks(&f.r, None)?;
    let multirank_match =
        rank_c.per_slice == rank_t.per_slice && rank_r.per_slice == rank_t.per_slice;

    let recon = cur_reconstruct(f)?;
    let mut diff_sq = 0.0;
    for (x, y) in recon.values().iter().zip(t.values().iter()) {
        diff_sq += (x - y) * (x - y);
    }
    let denom = frobenius(t);
    let exact = if denom == 0.0 {
        diff_sq.sqrt() <= tol
    } else {
        diff_sq.sqrt() / denom <= tol
    };
    Ok(ExactnessCheck {
        exact,
        multirank_match,
    })
}
