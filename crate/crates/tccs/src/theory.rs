//! Executable forms of the sampling-complexity guarantees and the
//! incoherence-transfer inequality.
//!
//! The calculators turn the recovery guarantees into numbers: given the
//! tensor statistics they report how many slices and what observation
//! densities suffice, together with the success-probability lower bound.
//! All logarithms are natural. Every reported quantity carries the raw
//! formula value next to an executable clamped version, because at small
//! sizes the requirements routinely exceed what the tensor can provide;
//! the clamped values are what a caller can actually use, the raw values
//! show by how far the regime misses the theory.
//!
//! The slack constant beta is accepted from 1 upward. Raising it tightens
//! the failure probability but demands more slices; the per-entry densities
//! are evaluated at those enlarged slice counts, so they need not grow with
//! beta and typically shrink.

use crate::spectral::{condition_number, incoherence_mu0, ranks, spectral_norm, tpinv, tsvd};
use crate::tensor::{subtensor, DenseTensor3, IndexSet};
use crate::{Error, Result};

/// Tensor statistics feeding the bound calculators: dimensions, tubal rank
/// r, incoherence mu0, condition number kappa, the slack constant beta, and
/// the multi-rank norms |r|_inf (max over slices) and |r|_1 (sum).
#[derive(Clone, Copy, Debug)]
pub struct BoundInputs {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub r: usize,
    pub mu0: f64,
    pub kappa: f64,
    pub beta: f64,
    pub rvec_inf: usize,
    pub rvec_1: usize,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.n3 == 0 {
            return Err(Error::Parameter("bound inputs need positive dims".into()));
        }
        if self.r == 0 || self.rvec_inf == 0 {
            return Err(Error::Parameter("bound inputs need a positive rank".into()));
        }
        if self.rvec_inf > self.rvec_1 {
            return Err(Error::Parameter(format!(
                "multi-rank norms are inconsistent: |r|_inf = {} > |r|_1 = {}",
                self.rvec_inf, self.rvec_1
            )));
        }
        if !(self.mu0 > 0.0) || !(self.kappa > 0.0) {
            return Err(Error::Parameter(
                "incoherence and condition number must be positive".into(),
            ));
        }
        if !(self.beta >= 1.0) {
            return Err(Error::Parameter(format!(
                "slack constant beta = {} is below 1",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Which guarantee to evaluate: the cross-concentrated model, pure slice
/// sampling with exact cross recovery, or plain Bernoulli observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundMode {
    Ccs,
    Tcur,
    Bernoulli,
}

/// One required quantity. `raw` is the formula value; `value` is the
/// executable version: slice counts are rounded up to whole slices and
/// capped by the dimension, probabilities capped at 1, success bounds kept
/// in [0, 1]. `clamped` flags the cap: the formula asked for more than the
/// instance can provide (or, for a success bound, certified nothing).
#[derive(Clone, Copy, Debug)]
pub struct Requirement {
    pub raw: f64,
    pub value: f64,
    pub clamped: bool,
}

fn slice_requirement(raw: f64, dim: usize) -> Requirement {
    let want = raw.ceil().max(1.0);
    let cap = dim as f64;
    if want > cap {
        Requirement {
            raw,
            value: cap,
            clamped: true,
        }
    } else {
        Requirement {
            raw,
            value: want,
            clamped: false,
        }
    }
}

fn prob_requirement(raw: f64) -> Requirement {
    if raw > 1.0 {
        Requirement {
            raw,
            value: 1.0,
            clamped: true,
        }
    } else {
        Requirement {
            raw,
            value: raw,
            clamped: false,
        }
    }
}

fn success_bound(raw: f64) -> Requirement {
    if raw < 0.0 {
        Requirement {
            raw,
            value: 0.0,
            clamped: true,
        }
    } else {
        Requirement {
            raw,
            value: raw,
            clamped: false,
        }
    }
}

/// Sufficient sampling parameters plus the success-probability lower bound.
#[derive(Clone, Debug)]
pub enum BoundReport {
    /// Cross-concentrated sampling: slice counts, the two Bernoulli rates
    /// evaluated at the clamped counts, and the four-term probability bound.
    /// `success_square` is the shorter displayed form available when
    /// n1 == n2.
    Ccs {
        size_i: Requirement,
        size_j: Requirement,
        p_r: Requirement,
        p_c: Requirement,
        success: Requirement,
        success_square: Option<Requirement>,
    },
    /// Uniform slice sampling for exact cross decomposition.
    Tcur {
        size_i: Requirement,
        size_j: Requirement,
        success: Requirement,
    },
    /// Entrywise Bernoulli observation.
    Bernoulli {
        p: Requirement,
        success: Requirement,
    },
}

/// Evaluate the sufficient conditions of the chosen guarantee.
///
/// The per-entry rates of the cross-concentrated mode depend on the slice
/// counts; they are evaluated at the clamped counts so the report stays
/// actionable on small instances.
pub fn bounds(inputs: &BoundInputs, mode: BoundMode) -> Result<BoundReport> {
    inputs.validate()?;
    let (n1, n2, n3) = (
        inputs.n1 as f64,
        inputs.n2 as f64,
        inputs.n3 as f64,
    );
    let (r, mu0, kappa, beta) = (inputs.r as f64, inputs.mu0, inputs.kappa, inputs.beta);
    // log(n1 n3 + n2 n3) and log((n1 + n2) n3) are the same quantity.
    let log_sum = ((n1 + n2) * n3).ln();
    match mode {
        BoundMode::Ccs => {
            let k2 = kappa * kappa;
            let size_raw = 3200.0 * beta * mu0 * r * k2 * log_sum * log_sum;
            let size_i = slice_requirement(size_raw, inputs.n1);
            let size_j = slice_requirement(size_raw, inputs.n2);
            let (si, sj) = (size_i.value, size_j.value);
            let p_r = prob_requirement(
                1600.0 * (si + n2) * mu0 * r * k2 * log_sum * log_sum / (si * n2),
            );
            let p_c = prob_requirement(
                1600.0 * (sj + n1) * mu0 * r * k2 * log_sum * log_sum / (sj * n1),
            );
            let m = (n1 + n2) * n3;
            let t1 = m.powf(-800.0 * beta * k2 * n2.ln());
            let t2 = m.powf(-800.0 * beta * k2 * n1.ln());
            let x3 = (n1 + sj) * n3;
            let x4 = (n2 + si) * n3;
            let t3 = 3.0 * x3.ln() / x3.powf(4.0 * beta - 2.0);
            let t4 = 3.0 * x4.ln() / x4.powf(4.0 * beta - 2.0);
            let success = success_bound(1.0 - t1 - t2 - t3 - t4);
            let success_square = (inputs.n1 == inputs.n2).then(|| {
                let nn = n1 * n3;
                success_bound(1.0 - 6.0 * (2.0 * nn).ln() / nn.powf(4.0 * beta - 2.0))
            });
            Ok(BoundReport::Ccs {
                size_i,
                size_j,
                p_r,
                p_c,
                success,
                success_square,
            })
        }
        BoundMode::Tcur => {
            let (rinf, rsum) = (inputs.rvec_inf as f64, inputs.rvec_1 as f64);
            let size_i = slice_requirement(
                2.0 * beta * mu0 * rinf * (n1 * rsum).ln(),
                inputs.n1,
            );
            let size_j = slice_requirement(
                2.0 * beta * mu0 * rinf * (n2 * rsum).ln(),
                inputs.n2,
            );
            let success = success_bound(1.0 - n1.powf(-beta) - n2.powf(-beta));
            Ok(BoundReport::Tcur {
                size_i,
                size_j,
                success,
            })
        }
        BoundMode::Bernoulli => {
            let m = (n1 + n2) * n3;
            let p = prob_requirement(
                256.0 * beta * (n1 + n2) * mu0 * r * m.ln() * m.ln() / (n1 * n2),
            );
            let success = success_bound(1.0 - 3.0 * m.ln() / m.powf(4.0 * beta - 2.0));
            Ok(BoundReport::Bernoulli { p, success })
        }
    }
}

/// How incoherence transfers to slice subtensors.
///
/// `applicable` records whether both subtensors preserve the multi-rank;
/// the transfer inequality only speaks about that case, so `holds_c` and
/// `holds_r` are meaningful only when it is set. The comparisons allow a
/// 1e-9 relative slack because maximally incoherent instances sit exactly
/// on the bound.
#[derive(Clone, Debug)]
pub struct IncoherenceReport {
    pub multirank: Vec<usize>,
    pub multirank_c: Vec<usize>,
    pub multirank_r: Vec<usize>,
    pub applicable: bool,
    pub mu0: f64,
    pub kappa: f64,
    /// Incoherence of the lateral and horizontal subtensors, each measured
    /// against its own compact factorization.
    pub mu_c: f64,
    pub mu_r: f64,
    /// kappa^2 |V_J^+|^2 (|J|/n2) mu0 and the horizontal analogue.
    pub bound_c: f64,
    pub bound_r: f64,
    pub holds_c: bool,
    pub holds_r: bool,
    /// (25/4) kappa^2 mu0, present when |I| and |J| meet the
    /// uniform-sampling slice counts at beta = 1.
    pub corollary_bound: Option<f64>,
}

/// Evaluate the subtensor-incoherence inequality for concrete index sets.
///
/// Both sides are computed from scratch: the left empirically from the
/// subtensor's own factorization, the right from the parent factors. Index
/// sets may contain repeats (uniform sampling with replacement); repeated
/// slices count with multiplicity.
pub fn subtensor_incoherence_check(
    t: &DenseTensor3,
    i_set: &IndexSet,
    j_set: &IndexSet,
) -> Result<IncoherenceReport> {
    let (n1, n2, _) = t.dims();
    if i_set.bound() != n1 || j_set.bound() != n2 {
        return Err(Error::Parameter(format!(
            "index-set bounds ({}, {}) do not match tensor {}x{}",
            i_set.bound(),
            j_set.bound(),
            n1,
            n2
        )));
    }
    if i_set.is_empty() || j_set.is_empty() {
        return Err(Error::Parameter("index sets must be nonempty".into()));
    }
    let mr_t = ranks(t, None)?;
    let c = subtensor(t, None, Some(j_set))?;
    let r = subtensor(t, Some(i_set), None)?;
    let mr_c = ranks(&c, None)?;
    let mr_r = ranks(&r, None)?;
    let applicable =
        mr_c.per_slice == mr_t.per_slice && mr_r.per_slice == mr_t.per_slice;

    let mu0 = incoherence_mu0(t, None)?;
    let kappa = condition_number(t)?;
    let factors = tsvd(t, None)?;
    let vj = subtensor(&factors.v, Some(j_set), None)?;
    let wi = subtensor(&factors.w, Some(i_set), None)?;
    let vj_pinv_norm = spectral_norm(&tpinv(&vj, None)?)?;
    let wi_pinv_norm = spectral_norm(&tpinv(&wi, None)?)?;
    let k2 = kappa * kappa;
    let bound_c = k2 * vj_pinv_norm * vj_pinv_norm * (j_set.len() as f64 / n2 as f64) * mu0;
    let bound_r = k2 * wi_pinv_norm * wi_pinv_norm * (i_set.len() as f64 / n1 as f64) * mu0;
    let mu_c = incoherence_mu0(&c, None)?;
    let mu_r = incoherence_mu0(&r, None)?;
    let slack = 1.0 + 1e-9;

    // Uniform-sampling corollary gate, evaluated at beta = 1.
    let rinf = mr_t.tubal as f64;
    let rsum = mr_t.sum as f64;
    let need_i = 2.0 * mu0 * rinf * (n1 as f64 * rsum).ln();
    let need_j = 2.0 * mu0 * rinf * (n2 as f64 * rsum).ln();
    let corollary_bound = (i_set.len() as f64 >= need_i && j_set.len() as f64 >= need_j)
        .then(|| 25.0 / 4.0 * k2 * mu0);

    Ok(IncoherenceReport {
        multirank: mr_t.per_slice,
        multirank_c: mr_c.per_slice,
        multirank_r: mr_r.per_slice,
        applicable,
        mu0,
        kappa,
        mu_c,
        mu_r,
        bound_c,
        bound_r,
        holds_c: mu_c <= bound_c * slack,
        holds_r: mu_r <= bound_r * slack,
        corollary_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng::PlanRng;
    use crate::testutil::random_lowrank;
    use approx::assert_relative_eq;

    fn base_inputs() -> BoundInputs {
        BoundInputs {
            n1: 1000,
            n2: 1000,
            n3: 1,
            r: 2,
            mu0: 1.0,
            kappa: 1.0,
            beta: 1.0,
            rvec_inf: 2,
            rvec_1: 8,
        }
    }

    /// 2 * 1 * 1 * 2 * ln(1000 * 8) = 35.948..., so 36 slices suffice, with
    /// success at least 1 - 2/1000.
    #[test]
    fn tcur_slice_count_hand_value() {
        let report = bounds(&base_inputs(), BoundMode::Tcur).unwrap();
        let BoundReport::Tcur {
            size_i,
            size_j,
            success,
        } = report
        else {
            panic!("wrong report variant");
        };
        assert_relative_eq!(size_i.raw, 4.0 * 8000f64.ln(), max_relative = 1e-14);
        assert_eq!(size_i.value, 36.0);
        assert!(!size_i.clamped);
        assert_eq!(size_j.value, 36.0);
        assert_relative_eq!(success.value, 0.998, max_relative = 1e-12);
    }

    #[test]
    fn bernoulli_rate_is_linear_in_beta() {
        let mut hi = base_inputs();
        hi.beta = 2.0;
        let (lo, hi) = (
            bounds(&base_inputs(), BoundMode::Bernoulli).unwrap(),
            bounds(&hi, BoundMode::Bernoulli).unwrap(),
        );
        let (BoundReport::Bernoulli { p: p1, .. }, BoundReport::Bernoulli { p: p2, .. }) =
            (lo, hi)
        else {
            panic!("wrong report variant");
        };
        assert_relative_eq!(p2.raw, 2.0 * p1.raw, max_relative = 1e-14);
    }

    /// On a tiny tensor every requirement overshoots: slice counts cap at
    /// the dims and the rates cap at 1, all flagged.
    #[test]
    fn ccs_clamps_on_tiny_tensors() {
        let inputs = BoundInputs {
            n1: 4,
            n2: 4,
            n3: 2,
            r: 1,
            mu0: 1.0,
            kappa: 1.0,
            beta: 1.5,
            rvec_inf: 1,
            rvec_1: 2,
        };
        let BoundReport::Ccs {
            size_i, p_r, p_c, ..
        } = bounds(&inputs, BoundMode::Ccs).unwrap()
        else {
            panic!("wrong report variant");
        };
        assert!(size_i.clamped);
        assert_eq!(size_i.value, 4.0);
        assert!(size_i.raw > 4.0);
        assert!(p_r.clamped && p_c.clamped);
        assert_eq!(p_r.value, 1.0);
        assert!(p_r.raw > 1.0);
    }

    #[test]
    fn beta_below_one_is_rejected_and_one_is_accepted() {
        let mut inputs = base_inputs();
        inputs.beta = 0.99;
        for mode in [BoundMode::Ccs, BoundMode::Tcur, BoundMode::Bernoulli] {
            assert!(matches!(bounds(&inputs, mode), Err(Error::Parameter(_))));
        }
        inputs.beta = 1.0;
        assert!(bounds(&inputs, BoundMode::Ccs).is_ok());
    }

    #[test]
    fn inconsistent_inputs_are_rejected() {
        let mut inputs = base_inputs();
        inputs.rvec_inf = 9;
        assert!(matches!(
            bounds(&inputs, BoundMode::Tcur),
            Err(Error::Parameter(_))
        ));
        let mut inputs = base_inputs();
        inputs.n3 = 0;
        assert!(bounds(&inputs, BoundMode::Ccs).is_err());
        let mut inputs = base_inputs();
        inputs.mu0 = 0.0;
        assert!(bounds(&inputs, BoundMode::Ccs).is_err());
    }

    fn ccs_outputs(inputs: &BoundInputs) -> (f64, f64, f64, f64) {
        let BoundReport::Ccs {
            size_i,
            p_r,
            success,
            ..
        } = bounds(inputs, BoundMode::Ccs).unwrap()
        else {
            panic!("wrong report variant");
        };
        (size_i.raw, p_r.raw, success.raw, size_i.value)
    }

    /// Requirements grow with each difficulty parameter. The rates are
    /// checked on the r, mu0, kappa axes only: raising beta shifts load
    /// onto the slice counts, so the per-entry densities may drop there.
    #[test]
    fn ccs_requirements_are_monotone_over_a_lattice() {
        let rs = [1usize, 2, 4];
        let mus = [1.0, 2.0];
        let kappas = [1.0, 2.0];
        let betas = [1.0, 1.5, 2.0];
        let make = |r: usize, mu0: f64, kappa: f64, beta: f64| BoundInputs {
            n1: 100_000,
            n2: 100_000,
            n3: 16,
            r,
            mu0,
            kappa,
            beta,
            rvec_inf: r,
            rvec_1: r * 16,
        };
        let slack = 1.0 + 1e-12;
        for (ri, &r) in rs.iter().enumerate() {
            for (mi, &mu0) in mus.iter().enumerate() {
                for (ki, &kappa) in kappas.iter().enumerate() {
                    for (bi, &beta) in betas.iter().enumerate() {
                        let here = ccs_outputs(&make(r, mu0, kappa, beta));
                        let mut prev = Vec::new();
                        if ri > 0 {
                            prev.push((ccs_outputs(&make(rs[ri - 1], mu0, kappa, beta)), true));
                        }
                        if mi > 0 {
                            prev.push((ccs_outputs(&make(r, mus[mi - 1], kappa, beta)), true));
                        }
                        if ki > 0 {
                            prev.push((ccs_outputs(&make(r, mu0, kappas[ki - 1], beta)), true));
                        }
                        if bi > 0 {
                            prev.push((ccs_outputs(&make(r, mu0, kappa, betas[bi - 1])), false));
                        }
                        for ((s_lo, p_lo, succ_lo, _), check_rate) in prev {
                            assert!(here.0 * slack >= s_lo, "slice requirement dropped");
                            assert!(here.2 * slack >= succ_lo, "success bound dropped");
                            if check_rate {
                                assert!(here.1 * slack >= p_lo, "rate requirement dropped");
                            }
                        }
                    }
                }
            }
        }
    }

    /// With n1 == n2 the report carries the shorter displayed bound, which
    /// must match its formula and not exceed the four-term version.
    #[test]
    fn ccs_square_form_matches_formula() {
        let inputs = BoundInputs {
            n1: 60,
            n2: 60,
            n3: 16,
            r: 2,
            mu0: 1.0,
            kappa: 1.0,
            beta: 1.5,
            rvec_inf: 2,
            rvec_1: 20,
        };
        let BoundReport::Ccs {
            success,
            success_square,
            ..
        } = bounds(&inputs, BoundMode::Ccs).unwrap()
        else {
            panic!("wrong report variant");
        };
        let nn = 60.0f64 * 16.0;
        let expect = 1.0 - 6.0 * (2.0 * nn).ln() / nn.powf(4.0); // 4 beta - 2 = 4
        let sq = success_square.expect("square dims must produce the short form");
        assert_relative_eq!(sq.raw, expect, max_relative = 1e-14);
        assert!(success.raw >= sq.raw);
        let mut rect = inputs;
        rect.n2 = 61;
        let BoundReport::Ccs { success_square, .. } = bounds(&rect, BoundMode::Ccs).unwrap()
        else {
            panic!("wrong report variant");
        };
        assert!(success_square.is_none());
    }

    #[test]
    fn full_index_sets_reproduce_the_tensor_incoherence() {
        let t = random_lowrank(20, 16, 3, 2, 70);
        let report =
            subtensor_incoherence_check(&t, &IndexSet::full(20), &IndexSet::full(16)).unwrap();
        assert!(report.applicable);
        assert!((report.mu_c - report.mu0).abs() <= 1e-12 * report.mu0);
        assert!((report.mu_r - report.mu0).abs() <= 1e-12 * report.mu0);
        assert!(report.bound_c >= report.mu0 * (1.0 - 1e-12));
        assert!(report.bound_r >= report.mu0 * (1.0 - 1e-12));
        assert!(report.holds_c && report.holds_r);
    }

    /// The transfer inequality must hold on every rank-preserving draw.
    #[test]
    fn transfer_inequality_holds_on_random_instances() {
        let t = random_lowrank(40, 40, 4, 2, 71);
        for seed in 0..100u64 {
            let mut rng = PlanRng::derive(71, &[seed]);
            let i_set = IndexSet::without_replacement(rng.choose(40, 10), 40).unwrap();
            let j_set = IndexSet::without_replacement(rng.choose(40, 10), 40).unwrap();
            let report = subtensor_incoherence_check(&t, &i_set, &j_set).unwrap();
            assert!(report.applicable, "rank dropped on seed {seed}");
            assert!(
                report.holds_c && report.holds_r,
                "transfer inequality failed on seed {seed}: \
                 mu_c = {}, bound_c = {}, mu_r = {}, bound_r = {}",
                report.mu_c,
                report.bound_c,
                report.mu_r,
                report.bound_r
            );
        }
    }

    /// A lateral slice built from a single tube drops the rank; the report
    /// must mark the bound inapplicable.
    #[test]
    fn rank_drop_is_reported_as_inapplicable() {
        let a = crate::testutil::random_tensor(12, 2, 3, 72);
        let mut b = DenseTensor3::zeros(2, 10, 3).unwrap();
        let pattern = crate::testutil::random_tensor(2, 10, 3, 73);
        for k in 0..3 {
            for j in 0..10 {
                // row 1 only feeds columns j >= 1, so lateral slice 0 of the
                // product has rank 1 while the tensor has rank 2.
                b.set(0, j, k, pattern.get(0, j, k));
                if j >= 1 {
                    b.set(1, j, k, pattern.get(1, j, k));
                }
            }
        }
        let t = crate::tensor::tprod(&a, &b).unwrap();
        assert_eq!(ranks(&t, None).unwrap().tubal, 2);
        let j_set = IndexSet::without_replacement(vec![0], 10).unwrap();
        let report = subtensor_incoherence_check(&t, &IndexSet::full(12), &j_set).unwrap();
        assert!(!report.applicable);
        assert!(report.multirank_c.iter().all(|&r| r <= 1));
    }

    /// A flat rank-1 tensor is maximally incoherent (mu0 = 1), so modest
    /// index sets satisfy the uniform-sampling gate and sit exactly on the
    /// transfer bound.
    #[test]
    fn uniform_corollary_bound_on_a_flat_tensor() {
        let ones = DenseTensor3::from_fn(60, 60, 1, |_, _, _| 1.0).unwrap();
        let i_set = IndexSet::without_replacement((0..10).collect(), 60).unwrap();
        let j_set = IndexSet::without_replacement((10..20).collect(), 60).unwrap();
        let report = subtensor_incoherence_check(&ones, &i_set, &j_set).unwrap();
        assert!(report.applicable);
        assert_relative_eq!(report.mu0, 1.0, max_relative = 1e-12);
        assert_relative_eq!(report.kappa, 1.0, max_relative = 1e-12);
        // need = 2 * 1 * 1 * ln(60) = 8.19 slices, and 10 were taken
        let corollary = report.corollary_bound.expect("gate should open");
        assert_relative_eq!(corollary, 6.25, max_relative = 1e-12);
        assert!(report.holds_c && report.holds_r);
        assert_relative_eq!(report.bound_c, 1.0, max_relative = 1e-9);

        // two slices miss the gate
        let small = IndexSet::without_replacement(vec![0, 1], 60).unwrap();
        let report = subtensor_incoherence_check(&ones, &small, &small).unwrap();
        assert!(report.corollary_bound.is_none());
    }
}
