//! Reconstruction quality metrics: peak signal-to-noise ratio, mean
//! structural similarity over frontal slices, and Frobenius relative error
//! in both dense and cross-factor form.

use nalgebra::DMatrix;

use crate::spectral::{dft3, pinv_slice, slice_svds, DEFAULT_RANK_TOL};
use crate::tcur::CurFactors;
use crate::tensor::{frobenius, norm, DenseTensor3, NormKind};
use crate::{Error, Result};

fn same_dims(truth: &DenseTensor3, estimate: &DenseTensor3) -> Result<()> {
    if truth.dims() != estimate.dims() {
        let (a1, a2, a3) = truth.dims();
        let (b1, b2, b3) = estimate.dims();
        return Err(Error::Shape(format!(
            "metric operands differ: {a1}x{a2}x{a3} vs {b1}x{b2}x{b3}"
        )));
    }
    Ok(())
}

/// 10 log10( n1 n2 n3 |truth|_inf^2 / |truth - estimate|_F^2 ) in dB.
///
/// Identical inputs return +infinity. A zero reference has no peak value and
/// is rejected.
pub fn psnr(truth: &DenseTensor3, estimate: &DenseTensor3) -> Result<f64> {
    same_dims(truth, estimate)?;
    let peak = norm(truth, NormKind::Infinity);
    if peak == 0.0 {
        return Err(Error::Parameter(
            "psnr is undefined for a zero reference tensor".into(),
        ));
    }
    let err_sq: f64 = truth
        .values()
        .iter()
        .zip(estimate.values())
        .map(|(t, e)| (t - e) * (t - e))
        .sum();
    if err_sq == 0.0 {
        return Ok(f64::INFINITY);
    }
    let n = truth.len() as f64;
    Ok(10.0 * (n * peak * peak / err_sq).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Gaussian window, truncated to wh x ww and renormalized to sum 1. The
/// center sits at the geometric middle, so even sizes sample off-peak.
fn gaussian_window(wh: usize, ww: usize) -> Vec<f64> {
    let (ch, cw) = ((wh as f64 - 1.0) / 2.0, (ww as f64 - 1.0) / 2.0);
    let mut w = Vec::with_capacity(wh * ww);
    for a in 0..wh {
        for b in 0..ww {
            let (da, db) = (a as f64 - ch, b as f64 - cw);
            w.push((-(da * da + db * db) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

// A 0/0 factor means both windows are degenerate along that component
// (equal zero means or zero spread with zero constants), which is the
// identical case: score 1. Cauchy-Schwarz rules out nonzero/0.
fn ssim_factor(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

fn ssim_slice(x: &DMatrix<f64>, y: &DMatrix<f64>, c1: f64, c2: f64) -> f64 {
    let (h, w) = (x.nrows(), x.ncols());
    let (wh, ww) = (h.min(SSIM_WINDOW), w.min(SSIM_WINDOW));
    let win = gaussian_window(wh, ww);
    let mut acc = 0.0;
    let mut count = 0usize;
    for i0 in 0..=(h - wh) {
        for j0 in 0..=(w - ww) {
            let (mut mx, mut my) = (0.0, 0.0);
            let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
            for a in 0..wh {
                for b in 0..ww {
                    let g = win[a * ww + b];
                    let xv = x[(i0 + a, j0 + b)];
                    let yv = y[(i0 + a, j0 + b)];
                    mx += g * xv;
                    my += g * yv;
                    xx += g * xv * xv;
                    yy += g * yv * yv;
                    xy += g * xv * yv;
                }
            }
            // Moments of a constant window cancel only to rounding; treat
            // variances below 1e-13 of the raw second moment as exactly
            // zero, and a zero variance forces zero covariance.
            let mut vx = xx - mx * mx;
            let mut vy = yy - my * my;
            if !(vx > 1e-13 * xx) {
                vx = 0.0;
            }
            if !(vy > 1e-13 * yy) {
                vy = 0.0;
            }
            let cov = if vx == 0.0 || vy == 0.0 {
                0.0
            } else {
                xy - mx * my
            };
            let lum = ssim_factor(2.0 * mx * my + c1, mx * mx + my * my + c1);
            let cs = ssim_factor(2.0 * cov + c2, vx + vy + c2);
            acc += lum * cs;
            count += 1;
        }
    }
    acc / count as f64
}

/// Mean single-scale SSIM over frontal slices.
///
/// Gaussian window 11x11 with sigma 1.5, K1 = 0.01, K2 = 0.03. Slices
/// smaller than the window shrink it to the slice size (truncating the
/// Gaussian symmetrically and renormalizing); windows slide over fully
/// contained positions only, no padding. The dynamic range is max - min of
/// the whole truth tensor, so every slice is scored on one scale.
pub fn ssim_avg(truth: &DenseTensor3, estimate: &DenseTensor3) -> Result<f64> {
    same_dims(truth, estimate)?;
    let (lo, hi) = truth
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let c1 = (SSIM_K1 * range) * (SSIM_K1 * range);
    let c2 = (SSIM_K2 * range) * (SSIM_K2 * range);
    let n3 = truth.n3();
    let mut acc = 0.0;
    for k in 0..n3 {
        acc += ssim_slice(&truth.frontal_slice(k), &estimate.frontal_slice(k), c1, c2);
    }
    Ok(acc / n3 as f64)
}

/// |truth - estimate|_F / |truth|_F.
pub fn rel_error(truth: &DenseTensor3, estimate: &DenseTensor3) -> Result<f64> {
    same_dims(truth, estimate)?;
    let den = frobenius(truth);
    if den == 0.0 {
        return Err(Error::Parameter(
            "relative error is undefined for a zero reference tensor".into(),
        ));
    }
    let num_sq: f64 = truth
        .values()
        .iter()
        .zip(estimate.values())
        .map(|(t, e)| (t - e) * (t - e))
        .sum();
    Ok(num_sq.sqrt() / den)
}

/// The same quantity for a cross decomposition, evaluated slice by slice in
/// the spectral domain:
///
///   |T - C * U^+ * R|_F^2 = (1/n3) sum_k |T_k - C_k U_k^+ R_k|_F^2
///
/// Only one n1 x n2 complex slice is live at a time; the dense
/// reconstruction is never assembled. The pseudoinverse cutoff matches
/// [`crate::spectral::tpinv`] with its default tolerance.
pub fn rel_error_factors(truth: &DenseTensor3, factors: &CurFactors) -> Result<f64> {
    if factors.full_dims() != truth.dims() {
        let (f1, f2, f3) = factors.full_dims();
        let (t1, t2, t3) = truth.dims();
        return Err(Error::Shape(format!(
            "factors reconstruct {f1}x{f2}x{f3}, truth is {t1}x{t2}x{t3}"
        )));
    }
    let den = frobenius(truth);
    if den == 0.0 {
        return Err(Error::Parameter(
            "relative error is undefined for a zero reference tensor".into(),
        ));
    }
    let st = dft3(truth);
    let sc = dft3(&factors.c);
    let sr = dft3(&factors.r);
    let svds = slice_svds(&dft3(&factors.u))?;
    let smax = svds
        .iter()
        .flat_map(|s| s.sigma.iter())
        .fold(0.0f64, |m, &s| m.max(s));
    let thr = DEFAULT_RANK_TOL * smax;
    let n3 = truth.n3();
    let mut acc = 0.0;
    for k in 0..n3 {
        let p = pinv_slice(&svds[k], thr);
        let approx = sc.slice(k) * &p * sr.slice(k);
        acc += (st.slice(k) - approx).norm_squared();
    }
    Ok((acc / n3 as f64).sqrt() / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng::PlanRng;
    use crate::tcur::{check_exact, cur_reconstruct, extract_cur};
    use crate::tensor::IndexSet;
    use crate::testutil::{random_lowrank, random_tensor};
    use approx::assert_relative_eq;

    #[test]
    fn psnr_identical_is_infinite() {
        let t = random_tensor(6, 5, 3, 41);
        assert_eq!(psnr(&t, &t).unwrap(), f64::INFINITY);
    }

    /// All-ones truth vs all-zeros estimate, 2x2x1:
    /// 10 log10(4 * 1 / 4) = 0 dB.
    #[test]
    fn psnr_hand_value_zero_db() {
        let ones = DenseTensor3::from_fn(2, 2, 1, |_, _, _| 1.0).unwrap();
        let zeros = DenseTensor3::zeros(2, 2, 1).unwrap();
        assert_eq!(psnr(&ones, &zeros).unwrap(), 0.0);
    }

    #[test]
    fn psnr_scale_invariant() {
        let t = random_tensor(7, 6, 4, 42);
        let e = random_tensor(7, 6, 4, 43);
        let mut ts = t.clone();
        let mut es = e.clone();
        ts.scale(3.7);
        es.scale(3.7);
        assert_relative_eq!(
            psnr(&t, &e).unwrap(),
            psnr(&ts, &es).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn psnr_zero_truth_rejected() {
        let z = DenseTensor3::zeros(3, 3, 2).unwrap();
        let e = random_tensor(3, 3, 2, 44);
        assert!(matches!(psnr(&z, &e), Err(Error::Parameter(_))));
    }

    /// Fixed noise direction, five magnitudes a decade apart: PSNR must
    /// strictly drop each step.
    #[test]
    fn psnr_monotone_in_perturbation() {
        let t = random_tensor(10, 9, 4, 45);
        let noise = random_tensor(10, 9, 4, 46);
        let mut last = f64::INFINITY;
        for p in 0..5 {
            let mag = 1e-3 * 10f64.powi(p);
            let mut e = t.clone();
            e.axpy(mag, &noise).unwrap();
            let db = psnr(&t, &e).unwrap();
            assert!(db < last, "psnr did not drop at magnitude {mag}");
            last = db;
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = random_tensor(4, 4, 2, 47);
        let b = random_tensor(4, 5, 2, 47);
        assert!(matches!(psnr(&a, &b), Err(Error::Shape(_))));
        assert!(matches!(ssim_avg(&a, &b), Err(Error::Shape(_))));
        assert!(matches!(rel_error(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn ssim_identical_is_one() {
        let t = random_tensor(20, 17, 3, 48);
        let s = ssim_avg(&t, &t).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "ssim of identical tensors = {s}");
    }

    /// Negating a tensor with zero-mean windows flips every covariance. A
    /// checkerboard keeps the window means at zero (the Gaussian window has
    /// no energy at the alternating frequency), so the structural term's
    /// sign carries through.
    #[test]
    fn ssim_sign_flip_is_negative() {
        let t = DenseTensor3::from_fn(24, 24, 2, |i, j, k| {
            if (i + j + k) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .unwrap();
        let mut neg = t.clone();
        neg.scale(-1.0);
        assert!(ssim_avg(&t, &neg).unwrap() < 0.0);
    }

    /// Constant slices: variances vanish, so SSIM reduces to the luminance
    /// term. With a constant truth the stabilizers are zero and the score is
    /// exactly 2ab / (a^2 + b^2) = 2*3*1 / (9 + 1) = 0.6.
    #[test]
    fn ssim_constant_slices_closed_form() {
        let truth = DenseTensor3::from_fn(16, 16, 1, |_, _, _| 3.0).unwrap();
        let est = DenseTensor3::from_fn(16, 16, 1, |_, _, _| 1.0).unwrap();
        let s = ssim_avg(&truth, &est).unwrap();
        assert!((s - 0.6).abs() < 1e-12, "constant-patch ssim = {s}");
    }

    /// Slices smaller than 11x11 shrink the window to the slice.
    #[test]
    fn ssim_small_slices_use_shrunk_window() {
        let t = random_tensor(4, 4, 2, 50);
        assert!((ssim_avg(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let noise = random_tensor(4, 4, 2, 51);
        let mut e = t.clone();
        e.axpy(0.3, &noise).unwrap();
        let s = ssim_avg(&t, &e).unwrap();
        assert!(s < 1.0 && (-1.0..=1.0).contains(&s));
    }

    #[test]
    fn ssim_stays_in_range_on_unrelated_inputs() {
        let a = random_tensor(30, 25, 3, 52);
        let b = random_tensor(30, 25, 3, 53);
        let s = ssim_avg(&a, &b).unwrap();
        assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn rel_error_zero_estimate_is_one() {
        let t = random_tensor(8, 7, 3, 54);
        let z = DenseTensor3::zeros(8, 7, 3).unwrap();
        assert_relative_eq!(rel_error(&t, &z).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn rel_error_zero_truth_rejected() {
        let z = DenseTensor3::zeros(3, 3, 1).unwrap();
        assert!(matches!(rel_error(&z, &z), Err(Error::Parameter(_))));
        let f = extract_cur(
            &random_tensor(3, 3, 1, 55),
            &IndexSet::full(3),
            &IndexSet::full(3),
        )
        .unwrap();
        assert!(matches!(
            rel_error_factors(&z, &f),
            Err(Error::Parameter(_))
        ));
    }

    /// Success rule at 1e-3: estimates engineered just under and just over
    /// the threshold classify accordingly.
    #[test]
    fn rel_error_classifies_borderline_cases() {
        let t = random_tensor(12, 10, 4, 56);
        let dir = random_tensor(12, 10, 4, 57);
        let scale = frobenius(&t) / frobenius(&dir);
        for (target, succeeds) in [(0.999e-3, true), (1.001e-3, false)] {
            let mut e = t.clone();
            e.axpy(target * scale, &dir).unwrap();
            let eps = rel_error(&t, &e).unwrap();
            assert_relative_eq!(eps, target, max_relative = 1e-10);
            assert_eq!(eps <= 1e-3, succeeds);
        }
    }

    /// Exact cross factors must score as an exact reconstruction. Seeds are
    /// scanned deterministically for an index pair that preserves the
    /// multi-rank, which the remaining seeds virtually always contain.
    #[test]
    fn rel_error_exact_factors_is_zero() {
        let t = random_lowrank(20, 18, 4, 2, 58);
        let mut checked = false;
        for seed in 0..20u64 {
            let mut rng = PlanRng::derive(900, &[seed]);
            let i_set =
                IndexSet::without_replacement(rng.choose(20, 8), 20).unwrap();
            let j_set =
                IndexSet::without_replacement(rng.choose(18, 8), 18).unwrap();
            let f = extract_cur(&t, &i_set, &j_set).unwrap();
            if !check_exact(&f, &t, None).unwrap().exact {
                continue;
            }
            let eps = rel_error_factors(&t, &f).unwrap();
            assert!(eps < 1e-12, "exact factors scored {eps}");
            checked = true;
            break;
        }
        assert!(checked, "no exact index pair found in 20 seeds");
    }

    /// Factor route and dense route agree on inexact factors too.
    #[test]
    fn rel_error_factor_route_matches_dense_route() {
        let t = random_tensor(14, 12, 3, 59);
        let mut rng = PlanRng::derive(901, &[]);
        let i_set = IndexSet::without_replacement(rng.choose(14, 5), 14).unwrap();
        let j_set = IndexSet::without_replacement(rng.choose(12, 5), 12).unwrap();
        let f = extract_cur(&t, &i_set, &j_set).unwrap();
        let dense = cur_reconstruct(&f).unwrap();
        assert_relative_eq!(
            rel_error_factors(&t, &f).unwrap(),
            rel_error(&t, &dense).unwrap(),
            max_relative = 1e-10
        );
    }
}
