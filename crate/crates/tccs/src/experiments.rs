//! Synthetic experiment harness: low-rank instance generation, the
//! phase-transition sweep over (rank, cross fraction, slab rate), and the
//! per-iteration convergence study. All drivers emit CSV text and are
//! deterministic in the master seed, independent of thread count: trials
//! draw from hashed per-(cell, trial) RNG streams and results aggregate in
//! cell order, not completion order.
//!
//! Desk-scale solver runs here use unit step sizes. The inverse-rate
//! defaults are only stable when the cross is hundreds of slices wide; at
//! tens of slices the sampled residual estimate fluctuates past the
//! stability threshold and the iteration diverges.

use rayon::prelude::*;

use crate::error::Error;
use crate::metrics::rel_error_factors;
use crate::sampling::rng::PlanRng;
use crate::sampling::{make_ccs_plan, prob_for_alpha, CcsPlan};
use crate::solvers::{itcurtc, itcurtc_step, ItcurtcState, SolverConfig};
use crate::spectral::ranks;
use crate::tensor::{tprod, DenseTensor3};
use crate::Result;

/// Gaussian A * B instance with tubal rank exactly r; the rank is verified
/// before returning, since the experiment success rules assume it.
pub fn gen_lowrank(n1: usize, n2: usize, n3: usize, r: usize, seed: u64) -> Result<DenseTensor3> {
    if r < 1 || r > n1.min(n2) {
        return Err(Error::Parameter(format!(
            "target rank {r} outside 1..=min({n1}, {n2})"
        )));
    }
    let mut rng = PlanRng::from_seed(seed);
    let a = DenseTensor3::from_fn(n1, r, n3, |_, _, _| rng.normal())?;
    let b = DenseTensor3::from_fn(r, n2, n3, |_, _, _| rng.normal())?;
    let t = tprod(&a, &b)?;
    let mr = ranks(&t, None)?;
    if mr.tubal != r {
        return Err(Error::Numerical(format!(
            "generated instance has tubal rank {} instead of {r}; try another seed",
            mr.tubal
        )));
    }
    Ok(t)
}

/// Shared experiment knobs. The phase sweep uses the three grids; the
/// convergence study uses the first entry of `ranks`/`deltas` and `alphas`.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub dims: (usize, usize, usize),
    pub ranks: Vec<usize>,
    pub deltas: Vec<f64>,
    pub probs: Vec<f64>,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults: a reduced version of the published sweep.
    pub fn desk(seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            dims: (60, 60, 16),
            ranks: vec![2, 5, 7],
            deltas: vec![0.15, 0.25, 0.35, 0.5],
            probs: (1..=9).map(|i| i as f64 / 10.0).collect(),
            alphas: vec![0.15],
            trials: 25,
            seed,
            tol: 1e-8,
            max_iter: 500,
        }
    }

    fn validate_common(&self) -> Result<()> {
        let (n1, n2, n3) = self.dims;
        if n1 == 0 || n2 == 0 || n3 == 0 {
            return Err(Error::Parameter(format!("empty dims {:?}", self.dims)));
        }
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tolerance {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be at least 1".into()));
        }
        for &r in &self.ranks {
            if r < 1 || r > n1.min(n2) {
                return Err(Error::Parameter(format!(
                    "rank {r} outside 1..=min({n1}, {n2})"
                )));
            }
        }
        for &d in &self.deltas {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::Parameter(format!("delta {d} outside (0, 1]")));
            }
        }
        Ok(())
    }

    fn validate_phase(&self) -> Result<()> {
        self.validate_common()?;
        if self.ranks.is_empty() || self.deltas.is_empty() || self.probs.is_empty() {
            return Err(Error::Parameter("phase sweep needs non-empty grids".into()));
        }
        for &p in &self.probs {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Parameter(format!("probability {p} outside (0, 1]")));
            }
        }
        Ok(())
    }

    fn validate_convergence(&self) -> Result<()> {
        self.validate_common()?;
        if self.ranks.is_empty() || self.deltas.is_empty() || self.alphas.is_empty() {
            return Err(Error::Parameter(
                "convergence study needs a rank, a delta, and an alpha".into(),
            ));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Parameter(format!("alpha {a} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Success threshold for a phase-transition trial: relative reconstruction
/// error of the returned factors against the generating tensor.
pub const PHASE_SUCCESS_EPS: f64 = 1e-3;

fn slab_size(delta: f64, n: usize) -> usize {
    ((delta * n as f64).round() as usize).clamp(1, n)
}

fn unit_step_config(r: usize, tol: f64, max_iter: usize) -> SolverConfig {
    let mut cfg = SolverConfig::new(r);
    cfg.eta_r = Some(1.0);
    cfg.eta_c = Some(1.0);
    cfg.eta_u = Some(1.0);
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    cfg
}

fn trial_plan(
    dims: (usize, usize, usize),
    si: usize,
    sj: usize,
    p: f64,
    t: &DenseTensor3,
    seed: u64,
) -> Result<CcsPlan> {
    let mut plan = make_ccs_plan(dims, si, sj, p, p, false, seed)?;
    plan.capture(t)?;
    Ok(plan)
}

struct TrialOutcome {
    alpha: f64,
    success: bool,
}

/// One phase trial: generate, sample, solve, score. Any error after config
/// validation counts as a failed trial rather than aborting the sweep.
fn phase_trial(cfg: &ExperimentConfig, cell: u64, trial: u64, r: usize, delta: f64, p: f64) -> TrialOutcome {
    let (n1, n2, _) = cfg.dims;
    let si = slab_size(delta, n1);
    let sj = slab_size(delta, n2);
    let tensor_seed = PlanRng::derive(cfg.seed, &[cell, trial, 0]).next_u64();
    let plan_seed = PlanRng::derive(cfg.seed, &[cell, trial, 1]).next_u64();
    let attempt = || -> Result<TrialOutcome> {
        let t = gen_lowrank(n1, n2, cfg.dims.2, r, tensor_seed)?;
        let plan = trial_plan(cfg.dims, si, sj, p, &t, plan_seed)?;
        let alpha = plan.overall_rate();
        let solver_cfg = unit_step_config(r, cfg.tol, cfg.max_iter);
        let (factors, _) = itcurtc(&plan, &solver_cfg)?;
        let eps = rel_error_factors(&t, &factors)?;
        Ok(TrialOutcome {
            alpha,
            success: eps <= PHASE_SUCCESS_EPS,
        })
    };
    attempt().unwrap_or(TrialOutcome {
        alpha: f64::NAN,
        success: false,
    })
}

/// Sweep the (rank, delta, p) grid. Returns CSV text with header
/// `r,delta,p,alpha_mean,successes,trials`; cells appear in grid order
/// (rank-major, then delta, then p). `alpha_mean` averages the exact
/// realized sampling rate over the cell's trials that produced a plan.
pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate_phase()?;
    let mut cells = Vec::new();
    for &r in &cfg.ranks {
        for &delta in &cfg.deltas {
            for &p in &cfg.probs {
                cells.push((r, delta, p));
            }
        }
    }

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (r, delta, p) = cells[c];
            phase_trial(cfg, c as u64, t as u64, r, delta, p)
        })
        .collect();

    let mut out = String::from("r,delta,p,alpha_mean,successes,trials\n");
    for (c, &(r, delta, p)) in cells.iter().enumerate() {
        let cell_outcomes = &outcomes[c * cfg.trials..(c + 1) * cfg.trials];
        let successes = cell_outcomes.iter().filter(|o| o.success).count();
        let alphas: Vec<f64> = cell_outcomes
            .iter()
            .map(|o| o.alpha)
            .filter(|a| a.is_finite())
            .collect();
        let alpha_mean = if alphas.is_empty() {
            f64::NAN
        } else {
            alphas.iter().sum::<f64>() / alphas.len() as f64
        };
        out.push_str(&format!(
            "{r},{delta},{p},{alpha_mean},{successes},{}\n",
            cfg.trials
        ));
    }
    Ok(out)
}

/// Per-iteration relative errors of one run, stopping once the error
/// reaches `tol` or the cap. eps[0] belongs to the zero iterate, so it is
/// exactly 1 whenever the instance is nonzero.
fn convergence_trial(
    cfg: &ExperimentConfig,
    r: usize,
    si: usize,
    sj: usize,
    p: f64,
    trial: u64,
) -> Result<Vec<f64>> {
    let (n1, n2, n3) = cfg.dims;
    let tensor_seed = PlanRng::derive(cfg.seed, &[trial, 0]).next_u64();
    let plan_seed = PlanRng::derive(cfg.seed, &[trial, 1]).next_u64();
    let t = gen_lowrank(n1, n2, n3, r, tensor_seed)?;
    let plan = trial_plan(cfg.dims, si, sj, p, &t, plan_seed)?;
    let solver_cfg = unit_step_config(r, 1e-300, cfg.max_iter);
    let mut state = ItcurtcState::zeros(&plan)?;
    let mut eps_hist = Vec::new();
    for _ in 0..cfg.max_iter {
        let eps = rel_error_factors(&t, &state.factors(&plan))?;
        eps_hist.push(eps);
        if eps <= cfg.tol {
            break;
        }
        let (next, _) = itcurtc_step(&state, &plan, &solver_cfg)?;
        state = next;
    }
    Ok(eps_hist)
}

/// Convergence study at fixed (rank, delta, alpha): `trials` independent
/// runs, relative error tracked per iteration and averaged. Returns CSV
/// text with header `k,eps_mean`. Runs that stop early hold their final
/// error for the remaining rows, so every row averages all trials.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate_convergence()?;
    let (n1, n2, _) = cfg.dims;
    let r = cfg.ranks[0];
    let delta = cfg.deltas[0];
    let alpha = cfg.alphas[0];
    let si = slab_size(delta, n1);
    let sj = slab_size(delta, n2);
    let p = prob_for_alpha(cfg.dims, si, sj, alpha)?;

    let histories: Vec<Result<Vec<f64>>> = (0..cfg.trials as u64)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&trial| convergence_trial(cfg, r, si, sj, p, trial))
        .collect();
    let histories: Vec<Vec<f64>> = histories.into_iter().collect::<Result<_>>()?;

    let depth = histories.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = String::from("k,eps_mean\n");
    for k in 0..depth {
        let mean = histories
            .iter()
            .map(|h| *h.get(k).unwrap_or_else(|| h.last().unwrap()))
            .sum::<f64>()
            / histories.len() as f64;
        out.push_str(&format!("{k},{mean}\n"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rel_err;

    #[test]
    fn generated_instances_hit_their_rank_and_seed() {
        let t = gen_lowrank(20, 20, 4, 3, 5).unwrap();
        assert_eq!(ranks(&t, None).unwrap().tubal, 3);
        let again = gen_lowrank(20, 20, 4, 3, 5).unwrap();
        assert_eq!(rel_err(&again, &t), 0.0);
        let other = gen_lowrank(20, 20, 4, 3, 6).unwrap();
        assert!(rel_err(&other, &t) > 0.1);
        assert!(gen_lowrank(20, 20, 4, 0, 1).is_err());
        assert!(gen_lowrank(20, 20, 4, 21, 1).is_err());
    }

    #[test]
    fn full_rank_generation_is_generic() {
        let t = gen_lowrank(6, 9, 3, 6, 2).unwrap();
        assert_eq!(ranks(&t, None).unwrap().tubal, 6);
    }

    fn tiny_phase_cfg() -> ExperimentConfig {
        ExperimentConfig {
            dims: (24, 24, 4),
            ranks: vec![2],
            deltas: vec![1.0],
            probs: vec![1.0],
            alphas: vec![0.3],
            trials: 2,
            seed: 11,
            tol: 1e-8,
            max_iter: 300,
        }
    }

    #[test]
    fn degenerate_cell_always_succeeds() {
        let csv = run_phase_transition(&tiny_phase_cfg()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "r,delta,p,alpha_mean,successes,trials");
        assert_eq!(lines.len(), 2);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[0], "2");
        assert_eq!(fields[3], "1"); // fully observed: alpha is exactly 1
        assert_eq!(fields[4], "2");
        assert_eq!(fields[5], "2");
    }

    #[test]
    fn starved_cell_never_succeeds() {
        let mut cfg = tiny_phase_cfg();
        cfg.dims = (60, 60, 16);
        cfg.deltas = vec![0.05];
        cfg.probs = vec![0.01];
        cfg.trials = 3;
        cfg.max_iter = 60;
        let csv = run_phase_transition(&cfg).unwrap();
        let row = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[4], "0", "starved cell row: {row}");
        let alpha: f64 = fields[3].parse().unwrap();
        assert!(alpha < 0.01, "alpha {alpha} should be near zero");
    }

    #[test]
    fn identical_seeds_give_identical_csv_across_thread_counts() {
        let cfg = {
            let mut c = tiny_phase_cfg();
            c.dims = (30, 30, 4);
            c.deltas = vec![0.4, 1.0];
            c.probs = vec![0.7];
            c.trials = 3;
            c
        };
        let a = run_phase_transition(&cfg).unwrap();
        let b = run_phase_transition(&cfg).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_phase_transition(&cfg).unwrap());
        assert_eq!(a, single);
    }

    #[test]
    fn solver_failures_count_as_failed_trials() {
        // rank 5 exceeds a 2-slice cross, so every trial errors out and the
        // sweep still completes with zero successes
        let mut cfg = tiny_phase_cfg();
        cfg.ranks = vec![5];
        cfg.deltas = vec![0.05];
        cfg.probs = vec![0.5];
        let csv = run_phase_transition(&cfg).unwrap();
        let fields: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(fields[4], "0");
        assert_eq!(fields[5], "2");
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = tiny_phase_cfg();
        cfg.probs = vec![];
        assert!(run_phase_transition(&cfg).is_err());
        let mut cfg = tiny_phase_cfg();
        cfg.probs = vec![1.5];
        assert!(run_phase_transition(&cfg).is_err());
        let mut cfg = tiny_phase_cfg();
        cfg.deltas = vec![0.0];
        assert!(run_phase_transition(&cfg).is_err());
        let mut cfg = tiny_phase_cfg();
        cfg.trials = 0;
        assert!(run_phase_transition(&cfg).is_err());
        let mut cfg = tiny_phase_cfg();
        cfg.alphas = vec![0.0];
        assert!(run_convergence(&cfg).is_err());
    }

    #[test]
    fn convergence_study_starts_at_one_and_decays() {
        let cfg = ExperimentConfig {
            dims: (40, 40, 8),
            ranks: vec![2],
            deltas: vec![0.3],
            probs: vec![],
            alphas: vec![0.3],
            trials: 4,
            seed: 21,
            tol: 1e-6,
            max_iter: 300,
        };
        let csv = run_convergence(&cfg).unwrap();
        let mut rows = csv.lines();
        assert_eq!(rows.next().unwrap(), "k,eps_mean");
        let parsed: Vec<(usize, f64)> = rows
            .map(|l| {
                let (k, e) = l.split_once(',').unwrap();
                (k.parse().unwrap(), e.parse().unwrap())
            })
            .collect();
        assert_eq!(parsed[0].0, 0);
        // the zero iterate's error is 1 up to one FFT rounding step
        assert!((parsed[0].1 - 1.0).abs() < 1e-12, "eps_0 = {}", parsed[0].1);
        let last = parsed.last().unwrap().1;
        assert!(last <= 1e-6, "final mean error {last}");
        // log-linear decay on the converging segment
        let seg: Vec<(f64, f64)> = parsed
            .iter()
            .filter(|(_, e)| *e > 1e-6)
            .map(|(k, e)| (*k as f64, e.ln()))
            .collect();
        assert!(seg.len() >= 5);
        let n = seg.len() as f64;
        let (sx, sy) = seg.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / n, sy / n);
        let sxx: f64 = seg.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        let sxy: f64 = seg.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let syy: f64 = seg.iter().map(|(_, y)| (y - my) * (y - my)).sum();
        let r2 = (sxy * sxy) / (sxx * syy);
        assert!(slope < 0.0, "slope {slope}");
        assert!(r2 >= 0.9, "R^2 {r2}");
        // deterministic repeat
        assert_eq!(run_convergence(&cfg).unwrap(), csv);
    }
}
