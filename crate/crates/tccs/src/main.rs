//! Command-line front end: synthetic data generation, sampling plans,
//! completion jobs, the two experiment drivers, the budget calculators,
//! and tensor-file comparison.
//!
//! Exit codes: 0 success, 2 bad parameters or usage, 3 file or parse
//! trouble, 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tccs::experiments::{gen_lowrank, run_convergence, run_phase_transition, ExperimentConfig};
use tccs::io::{read_plan, read_tensor, write_plan, write_tensor};
use tccs::metrics::{psnr, rel_error, ssim_avg};
use tccs::sampling::{make_ccs_plan, prob_for_alpha, CcsPlan};
use tccs::solvers::{itcurtc_with, tstc, IhtSubSolver, SolverConfig};
use tccs::spectral::{condition_number, incoherence_mu0, ranks};
use tccs::tcur::cur_reconstruct;
use tccs::tensor::DenseTensor3;
use tccs::theory::{bounds, BoundInputs, BoundMode, BoundReport, Requirement};
use tccs::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tccs",
    version,
    about = "Low tubal-rank tensor completion from cross-concentrated samples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random low tubal-rank tensor and write it as a .t3d file
    Gen {
        /// Tensor dimensions as N1xN2xN3, e.g. 60x60x16
        #[arg(long, value_parser = parse_dims)]
        dims: (usize, usize, usize),
        /// Target tubal rank
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output tensor file
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a cross-concentrated sampling plan over a tensor and record
    /// the observed values
    Sample {
        /// Tensor file to observe
        #[arg(long)]
        input: PathBuf,
        /// Fraction of slices per axis; sets --size-i and --size-j together
        #[arg(long, conflicts_with_all = ["size_i", "size_j"])]
        delta: Option<f64>,
        /// Number of horizontal slices in the cross
        #[arg(long, requires = "size_j")]
        size_i: Option<usize>,
        /// Number of lateral slices in the cross
        #[arg(long, requires = "size_i")]
        size_j: Option<usize>,
        /// Overall sampling rate target; sets --prob-r = --prob-c to match
        #[arg(long, conflicts_with_all = ["prob_r", "prob_c", "with_replacement"])]
        alpha: Option<f64>,
        /// Observation rate on the row slab
        #[arg(long, requires = "prob_c")]
        prob_r: Option<f64>,
        /// Observation rate on the column slab
        #[arg(long, requires = "prob_r")]
        prob_c: Option<f64>,
        /// Draw slice indices with replacement
        #[arg(long)]
        with_replacement: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output plan file
        #[arg(long)]
        out: PathBuf,
    },
    /// Complete a tensor from a captured sampling plan
    Solve {
        /// Plan file with captured values (or pass --input to capture now)
        #[arg(long)]
        plan: PathBuf,
        /// Ground-truth tensor; used to capture an unvalued plan and to
        /// report the true relative error
        #[arg(long)]
        input: Option<PathBuf>,
        /// Target tubal rank
        #[arg(long)]
        rank: usize,
        #[arg(long, value_enum, default_value_t = SolverKind::Itcurtc)]
        solver: SolverKind,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        /// Row-slab step size (default: inverse row sampling rate)
        #[arg(long)]
        eta_r: Option<f64>,
        /// Column-slab step size (default: inverse column sampling rate)
        #[arg(long)]
        eta_c: Option<f64>,
        /// Core step size (default: inverse of the larger slab rate)
        #[arg(long)]
        eta_u: Option<f64>,
        /// Step size of the slab sub-solver used by tstc (default: inverse
        /// slab rate)
        #[arg(long)]
        sub_eta: Option<f64>,
        /// Output prefix; factor files and the report CSV append suffixes
        #[arg(long)]
        out: PathBuf,
        /// Also write the dense reconstruction as <out>.full.t3d
        #[arg(long)]
        assemble: bool,
        /// Refuse dense outputs above this entry count
        #[arg(long, default_value_t = 1 << 24)]
        max_entries: usize,
    },
    /// Sweep the (rank, delta, p) grid and record success rates per cell
    Phase {
        #[arg(long, value_parser = parse_dims)]
        dims: Option<(usize, usize, usize)>,
        /// Comma-separated rank grid, e.g. 2,5,7
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
        /// Comma-separated slice-fraction grid
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        /// Comma-separated slab observation rates
        #[arg(long, value_delimiter = ',')]
        probs: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Track the mean relative error per pass at a fixed (rank, delta, alpha)
    Converge {
        #[arg(long, value_parser = parse_dims)]
        dims: Option<(usize, usize, usize)>,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long, default_value_t = 0.3)]
        delta: f64,
        /// Overall sampling rate target
        #[arg(long, default_value_t = 0.15)]
        alpha: f64,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the sampling-budget calculators
    Bounds {
        #[arg(long, value_enum, default_value_t = ModeArg::Ccs)]
        mode: ModeArg,
        /// Measure rank, incoherence, and conditioning from this tensor
        /// file instead of taking them as flags
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_parser = parse_dims)]
        dims: Option<(usize, usize, usize)>,
        #[arg(long)]
        rank: Option<usize>,
        /// Incoherence of the rank-r factors
        #[arg(long)]
        mu0: Option<f64>,
        /// Condition number (largest over smallest retained singular value)
        #[arg(long)]
        kappa: Option<f64>,
        /// Slack constant; larger values tighten the failure probability
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        /// Largest per-slice rank (default: rank)
        #[arg(long)]
        rvec_inf: Option<usize>,
        /// Sum of per-slice ranks (default: rank * n3)
        #[arg(long)]
        rvec_1: Option<usize>,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two tensor files: PSNR, slice-averaged SSIM, relative error
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    /// Iterative cross-concentrated solver producing (C, U, R) factors
    Itcurtc,
    /// Two-stage slab completion producing a dense tensor
    Tstc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Cross-concentrated sampling budget
    Ccs,
    /// Slice counts for exact cross decomposition
    Tcur,
    /// Entrywise Bernoulli observation budget
    Bernoulli,
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 3 {
        return Err(format!("expected N1xN2xN3, got {s:?}"));
    }
    let mut d = [0usize; 3];
    for (slot, part) in d.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| format!("bad dimension {part:?} in {s:?}"))?;
    }
    Ok((d[0], d[1], d[2]))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen {
            dims,
            rank,
            seed,
            out,
        } => cmd_gen(dims, rank, seed, &out),
        Command::Sample {
            input,
            delta,
            size_i,
            size_j,
            alpha,
            prob_r,
            prob_c,
            with_replacement,
            seed,
            out,
        } => cmd_sample(
            &input,
            delta,
            size_i.zip(size_j),
            alpha,
            prob_r.zip(prob_c),
            with_replacement,
            seed,
            &out,
        ),
        Command::Solve {
            plan,
            input,
            rank,
            solver,
            tol,
            max_iter,
            eta_r,
            eta_c,
            eta_u,
            sub_eta,
            out,
            assemble,
            max_entries,
        } => cmd_solve(SolveArgs {
            plan,
            input,
            rank,
            solver,
            tol,
            max_iter,
            etas: (eta_r, eta_c, eta_u),
            sub_eta,
            out,
            assemble,
            max_entries,
        }),
        Command::Phase {
            dims,
            ranks,
            deltas,
            probs,
            trials,
            seed,
            tol,
            max_iter,
            out,
        } => {
            let mut cfg = ExperimentConfig::desk(seed);
            if let Some(d) = dims {
                cfg.dims = d;
            }
            if let Some(r) = ranks {
                cfg.ranks = r;
            }
            if let Some(d) = deltas {
                cfg.deltas = d;
            }
            if let Some(p) = probs {
                cfg.probs = p;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(t) = tol {
                cfg.tol = t;
            }
            if let Some(m) = max_iter {
                cfg.max_iter = m;
            }
            let csv = run_phase_transition(&cfg)?;
            fs::write(&out, &csv)?;
            let cells = csv.lines().count().saturating_sub(1);
            println!("wrote {cells} cells to {}", out.display());
            Ok(())
        }
        Command::Converge {
            dims,
            rank,
            delta,
            alpha,
            trials,
            seed,
            tol,
            max_iter,
            out,
        } => {
            let mut cfg = ExperimentConfig::desk(seed);
            if let Some(d) = dims {
                cfg.dims = d;
            }
            cfg.ranks = vec![rank];
            cfg.deltas = vec![delta];
            cfg.alphas = vec![alpha];
            cfg.trials = trials;
            cfg.tol = tol;
            cfg.max_iter = max_iter;
            let csv = run_convergence(&cfg)?;
            fs::write(&out, &csv)?;
            let passes = csv.lines().count().saturating_sub(1);
            println!("wrote {passes} passes to {}", out.display());
            Ok(())
        }
        Command::Bounds {
            mode,
            input,
            dims,
            rank,
            mu0,
            kappa,
            beta,
            rvec_inf,
            rvec_1,
            out,
        } => cmd_bounds(
            mode, input, dims, rank, mu0, kappa, beta, rvec_inf, rvec_1, out,
        ),
        Command::Metrics {
            truth,
            estimate,
            out,
        } => {
            let t = read_tensor(&truth)?;
            let e = read_tensor(&estimate)?;
            let mut csv = String::from("metric,value\n");
            csv.push_str(&format!("psnr,{}\n", psnr(&t, &e)?));
            csv.push_str(&format!("ssim,{}\n", ssim_avg(&t, &e)?));
            csv.push_str(&format!("rel_error,{}\n", rel_error(&t, &e)?));
            emit(out.as_deref(), &csv)
        }
    }
}

fn cmd_gen(dims: (usize, usize, usize), rank: usize, seed: u64, out: &Path) -> Result<()> {
    let (n1, n2, n3) = dims;
    let t = gen_lowrank(n1, n2, n3, rank, seed)?;
    write_tensor(out, &t)?;
    println!(
        "wrote {n1}x{n2}x{n3} tensor of tubal rank {rank} to {}",
        out.display()
    );
    Ok(())
}

fn slab_size(delta: f64, n: usize) -> Result<usize> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Parameter(format!("delta {delta} outside (0, 1]")));
    }
    Ok(((delta * n as f64).round() as usize).clamp(1, n))
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    input: &Path,
    delta: Option<f64>,
    sizes: Option<(usize, usize)>,
    alpha: Option<f64>,
    probs: Option<(f64, f64)>,
    with_replacement: bool,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let t = read_tensor(input)?;
    let (n1, n2, _) = t.dims();
    let (size_i, size_j) = match (delta, sizes) {
        (Some(d), _) => (slab_size(d, n1)?, slab_size(d, n2)?),
        (None, Some(s)) => s,
        (None, None) => {
            return Err(Error::Parameter(
                "give --delta or both --size-i and --size-j".into(),
            ))
        }
    };
    let (p_r, p_c) = match (alpha, probs) {
        (Some(a), _) => {
            let p = prob_for_alpha(t.dims(), size_i, size_j, a)?;
            (p, p)
        }
        (None, Some(p)) => p,
        (None, None) => {
            return Err(Error::Parameter(
                "give --alpha or both --prob-r and --prob-c".into(),
            ))
        }
    };
    let mut plan = make_ccs_plan(t.dims(), size_i, size_j, p_r, p_c, with_replacement, seed)?;
    plan.capture(&t)?;
    write_plan(out, &plan)?;
    println!(
        "sampled {} slices x {} slices at rates ({p_r:.4}, {p_c:.4}); overall rate {:.4}; wrote {}",
        size_i,
        size_j,
        plan.overall_rate(),
        out.display()
    );
    Ok(())
}

struct SolveArgs {
    plan: PathBuf,
    input: Option<PathBuf>,
    rank: usize,
    solver: SolverKind,
    tol: f64,
    max_iter: usize,
    etas: (Option<f64>, Option<f64>, Option<f64>),
    sub_eta: Option<f64>,
    out: PathBuf,
    assemble: bool,
    max_entries: usize,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn check_cap(dims: (usize, usize, usize), cap: usize) -> Result<()> {
    let total = dims.0 * dims.1 * dims.2;
    if total > cap {
        return Err(Error::Parameter(format!(
            "dense assembly needs {total} entries, over the --max-entries cap \
             of {cap}; raise the cap to opt in"
        )));
    }
    Ok(())
}

fn distinct(indices: &[usize]) -> usize {
    let mut v = indices.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let mut plan: CcsPlan = read_plan(&args.plan)?;
    let truth: Option<DenseTensor3> = match &args.input {
        Some(p) => Some(read_tensor(p)?),
        None => None,
    };
    if !plan.is_captured() {
        match &truth {
            Some(t) => plan.capture(t)?,
            None => {
                return Err(Error::Parameter(
                    "plan carries no captured values; pass --input to capture them now".into(),
                ))
            }
        }
    }
    let di = distinct(plan.i_set().indices());
    let dj = distinct(plan.j_set().indices());
    if args.rank > di.min(dj) {
        return Err(Error::Parameter(format!(
            "target rank {} exceeds min(|I|, |J|) = {}; lower --rank or \
             resample with more slices (larger --delta or --size-i/--size-j)",
            args.rank,
            di.min(dj)
        )));
    }

    match args.solver {
        SolverKind::Itcurtc => {
            let mut cfg = SolverConfig::new(args.rank);
            cfg.tol = args.tol;
            cfg.max_iter = args.max_iter;
            (cfg.eta_r, cfg.eta_c, cfg.eta_u) = args.etas;
            cfg.trace = true;
            let mut trace = Vec::new();
            let (factors, report) =
                itcurtc_with(&plan, &cfg, truth.as_ref(), Some(&mut trace))?;

            let mut csv = String::from(if truth.is_some() { "k,e_k,eps_k\n" } else { "k,e_k\n" });
            csv.push_str(&String::from_utf8_lossy(&trace));
            let report_path = with_suffix(&args.out, ".report.csv");
            fs::write(&report_path, &csv)?;
            let c_path = with_suffix(&args.out, ".c.t3d");
            let u_path = with_suffix(&args.out, ".u.t3d");
            let r_path = with_suffix(&args.out, ".r.t3d");
            write_tensor(&c_path, &factors.c)?;
            write_tensor(&u_path, &factors.u)?;
            write_tensor(&r_path, &factors.r)?;

            let e_final = report.e_history.last().copied().unwrap_or(f64::NAN);
            if report.converged {
                println!(
                    "converged after {} passes, observed residual {e_final:.3e}",
                    report.iterations
                );
            } else {
                println!(
                    "stopped at the {}-pass cap, observed residual {e_final:.3e}",
                    report.iterations
                );
            }
            if let Some(eps) = report.eps_history.as_ref().and_then(|h| h.last()) {
                println!("relative error vs --input: {eps:.3e}");
            }
            println!(
                "cost: {} multiply-adds, peak {} live entries, {:.3}s",
                report.multiply_adds, report.peak_live_entries, report.wall_seconds
            );
            println!(
                "wrote {}, {}, {}, {}",
                c_path.display(),
                u_path.display(),
                r_path.display(),
                report_path.display()
            );
            if args.assemble {
                check_cap(plan.shape(), args.max_entries)?;
                let full = cur_reconstruct(&factors)?;
                let full_path = with_suffix(&args.out, ".full.t3d");
                write_tensor(&full_path, &full)?;
                println!("wrote {}", full_path.display());
            }
        }
        SolverKind::Tstc => {
            // The two-stage solver returns a dense tensor, so the size cap
            // applies to the run itself, not just to an --assemble request.
            check_cap(plan.shape(), args.max_entries)?;
            let sub = IhtSubSolver {
                eta: args.sub_eta,
                tol: args.tol,
                max_iter: args.max_iter,
            };
            let est = tstc(&plan, args.rank, &sub)?;
            let full_path = with_suffix(&args.out, ".full.t3d");
            write_tensor(&full_path, &est)?;
            if let Some(t) = &truth {
                println!("relative error vs --input: {:.3e}", rel_error(t, &est)?);
            }
            println!("wrote {}", full_path.display());
        }
    }
    Ok(())
}

fn requirement_row(label: &str, r: &Requirement) -> String {
    format!("{label},{},{},{}\n", r.raw, r.value, r.clamped)
}

#[allow(clippy::too_many_arguments)]
fn cmd_bounds(
    mode: ModeArg,
    input: Option<PathBuf>,
    dims: Option<(usize, usize, usize)>,
    rank: Option<usize>,
    mu0: Option<f64>,
    kappa: Option<f64>,
    beta: f64,
    rvec_inf: Option<usize>,
    rvec_1: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let inputs = match input {
        Some(path) => {
            let t = read_tensor(&path)?;
            let mr = ranks(&t, None)?;
            let (n1, n2, n3) = t.dims();
            BoundInputs {
                n1,
                n2,
                n3,
                r: rank.unwrap_or(mr.tubal),
                mu0: match mu0 {
                    Some(m) => m,
                    None => incoherence_mu0(&t, rank)?,
                },
                kappa: match kappa {
                    Some(k) => k,
                    None => condition_number(&t)?,
                },
                beta,
                rvec_inf: rvec_inf.unwrap_or(mr.tubal),
                rvec_1: rvec_1.unwrap_or(mr.sum),
            }
        }
        None => {
            let ((n1, n2, n3), r, mu0, kappa) = match (dims, rank, mu0, kappa) {
                (Some(d), Some(r), Some(m), Some(k)) => (d, r, m, k),
                _ => {
                    return Err(Error::Parameter(
                        "without --input, the flags --dims, --rank, --mu0, and --kappa \
                         are all required"
                            .into(),
                    ))
                }
            };
            BoundInputs {
                n1,
                n2,
                n3,
                r,
                mu0,
                kappa,
                beta,
                rvec_inf: rvec_inf.unwrap_or(r),
                rvec_1: rvec_1.unwrap_or(r * n3),
            }
        }
    };
    let mode = match mode {
        ModeArg::Ccs => BoundMode::Ccs,
        ModeArg::Tcur => BoundMode::Tcur,
        ModeArg::Bernoulli => BoundMode::Bernoulli,
    };
    let report = bounds(&inputs, mode)?;
    let mut csv = String::from("quantity,raw,value,clamped\n");
    match &report {
        BoundReport::Ccs {
            size_i,
            size_j,
            p_r,
            p_c,
            success,
            success_square,
        } => {
            csv.push_str(&requirement_row("size_i", size_i));
            csv.push_str(&requirement_row("size_j", size_j));
            csv.push_str(&requirement_row("p_r", p_r));
            csv.push_str(&requirement_row("p_c", p_c));
            csv.push_str(&requirement_row("success", success));
            if let Some(s) = success_square {
                csv.push_str(&requirement_row("success_square", s));
            }
        }
        BoundReport::Tcur {
            size_i,
            size_j,
            success,
        } => {
            csv.push_str(&requirement_row("size_i", size_i));
            csv.push_str(&requirement_row("size_j", size_j));
            csv.push_str(&requirement_row("success", success));
        }
        BoundReport::Bernoulli { p, success } => {
            csv.push_str(&requirement_row("p", p));
            csv.push_str(&requirement_row("success", success));
        }
    }
    emit(out.as_deref(), &csv)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
