use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use treeguess::dataset::{full_binarize, load_binary_csv, load_csv};
use treeguess::ensemble::{fit_binary, fit_with};
use treeguess::eval::{run_benchmark, BenchmarkConfig};
use treeguess::guess::{column_eliminate, min_depth_for_ensemble, vc_of_depth_trees, EliminationParams};
use treeguess::objective::Lambda;
use treeguess::solver::{optimize, RunReport};
use treeguess::{BoostingParams, DepthLimit, Parallelism, ReferenceLabels, SolverConfig};

/// Optimal sparse decision trees with guessed thresholds, depth and lower
/// bounds taken from a boosted reference model.
#[derive(Parser)]
#[command(name = "treeguess", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Binarize every midpoint threshold and write the 0/1 CSV.
    Binarize {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Column elimination: write the reduced 0/1 CSV and the trace.
    Guess {
        input: PathBuf,
        #[command(flatten)]
        reference: ReferenceArgs,
        /// Remove this fraction of surviving thresholds per refit.
        #[arg(long)]
        batch_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Fit an optimal tree and write it with a run report.
    Train(TrainArgs),
    /// Depth at which single trees match a K-member ensemble.
    DepthBound {
        #[arg(long)]
        k: u64,
        /// Depth of the weak learners; VC(B) is taken as 2^depth.
        #[arg(long, conflicts_with = "vc")]
        weak_depth: Option<u32>,
        #[arg(long, required_unless_present = "weak_depth")]
        vc: Option<u64>,
    },
    /// k-fold cross-validated pipeline report.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Clone)]
struct ReferenceArgs {
    #[arg(long, default_value_t = 20)]
    n_est: usize,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Allowed relative drop in training correct-count during elimination.
    #[arg(long, default_value_t = 0.0)]
    drop_tolerance: f64,
}

impl ReferenceArgs {
    fn boosting(&self) -> BoostingParams {
        BoostingParams::new(self.n_est, self.max_depth)
            .with_learning_rate(self.lr)
            .with_seed(self.seed)
    }

    fn elimination(&self, par: Parallelism) -> EliminationParams {
        let mut p = EliminationParams::new(self.boosting());
        p.drop_tolerance = self.drop_tolerance;
        p.parallelism = par;
        p
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Per-leaf penalty, as decimal text.
    #[arg(long)]
    lambda: Lambda,
    /// Maximum depth, or `none`.
    #[arg(long)]
    depth: DepthLimit,
    /// Reduce thresholds by column elimination before solving.
    #[arg(long)]
    guess_thresholds: bool,
    /// Bound subproblems by the reference model's mistakes.
    #[arg(long)]
    lb_guess: bool,
    #[arg(long)]
    time_limit_s: Option<f64>,
    /// Use rayon for split scans, boosting and folds.
    #[arg(long)]
    parallel: bool,
    /// Include wall times in the reports.
    #[arg(long)]
    timing: bool,
}

impl SolveArgs {
    fn parallelism(&self) -> Parallelism {
        if self.parallel {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    input: PathBuf,
    /// The input is a 0/1 CSV written by `binarize` or `guess`.
    #[arg(long)]
    binarized: bool,
    #[command(flatten)]
    solve: SolveArgs,
    #[command(flatten)]
    reference: ReferenceArgs,
    /// Skip the identical-rows lower bound.
    #[arg(long)]
    no_equiv_points: bool,
    #[arg(long)]
    max_cache_entries: Option<usize>,
    /// Tree JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Run report output; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Column elimination trace output, with --guess-thresholds.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    input: PathBuf,
    #[command(flatten)]
    solve: SolveArgs,
    #[command(flatten)]
    reference: ReferenceArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Seed of the fold shuffle.
    #[arg(long, default_value_t = 0)]
    fold_seed: u64,
    /// Also solve each fold on the full binarization without lb guessing.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    baseline_time_limit_s: Option<f64>,
    /// Report JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-fold CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Machine output; a closed stdout (e.g. piped into `head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn seconds(s: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(s).with_context(|| format!("invalid time limit {s}"))
}

fn binarize(input: &Path, out: &Path) -> Result<()> {
    let raw = load_csv(input)?;
    let bin = full_binarize(&raw);
    bin.save_csv(out)?;
    emit(&format!("{} columns", bin.n_columns()))?;
    Ok(())
}

fn guess(input: &Path, reference: &ReferenceArgs, batch: Option<f64>, out: &Path, trace_path: &Path) -> Result<()> {
    let raw = load_csv(input)?;
    let mut params = reference.elimination(Parallelism::Sequential);
    params.batch_fraction = batch;
    let trace = column_eliminate(&raw, params)?;
    log::info!(
        "kept {} of {} thresholds; correct {} -> {} of {}",
        trace.final_thresholds.len(),
        trace.initial_thresholds.len(),
        trace.initial_correct,
        trace.final_correct,
        trace.n_samples
    );
    trace.reduced.save_csv(out)?;
    write(trace_path, &trace.to_json_string(raw.feature_names()))?;
    emit(&format!("{} thresholds", trace.final_thresholds.len()))?;
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let par = a.solve.parallelism();
    let (bin, names, reference) = if a.binarized {
        if a.solve.guess_thresholds {
            bail!("--guess-thresholds needs raw input, not --binarized");
        }
        let bin = load_binary_csv(&a.input)?;
        let reference = if a.solve.lb_guess {
            let ens = fit_binary(&bin, a.reference.boosting(), par)?;
            Some(ReferenceLabels::from_binary_ensemble(&ens, &bin)?)
        } else {
            None
        };
        (bin, Vec::new(), reference)
    } else {
        let raw = load_csv(&a.input)?;
        let names = raw.feature_names().to_vec();
        if a.solve.guess_thresholds {
            let trace = column_eliminate(&raw, a.reference.elimination(par))?;
            log::info!(
                "column elimination kept {} of {} thresholds",
                trace.final_thresholds.len(),
                trace.initial_thresholds.len()
            );
            if let Some(p) = &a.trace {
                write(p, &trace.to_json_string(&names))?;
            }
            let reference = if a.solve.lb_guess {
                Some(ReferenceLabels::from_binary_ensemble(&trace.reference, &trace.reduced)?)
            } else {
                None
            };
            (trace.reduced, names, reference)
        } else {
            let reference = if a.solve.lb_guess {
                let ens = fit_with(&raw, a.reference.boosting(), par)?;
                Some(ReferenceLabels::from_ensemble(&ens, &raw)?)
            } else {
                None
            };
            (full_binarize(&raw), names, reference)
        }
    };
    if a.trace.is_some() && !a.solve.guess_thresholds {
        log::warn!("--trace ignored without --guess-thresholds");
    }

    let mut cfg = SolverConfig::new(a.solve.lambda, a.solve.depth)
        .with_parallelism(par)
        .with_equiv_points_bound(!a.no_equiv_points);
    if let Some(r) = reference {
        cfg = cfg.with_lb_guess(r);
    }
    if let Some(s) = a.solve.time_limit_s {
        cfg = cfg.with_time_limit(seconds(s)?);
    }
    if let Some(m) = a.max_cache_entries {
        cfg = cfg.with_max_cache_entries(m);
    }
    log::info!("solving on {} samples x {} columns", bin.n_samples(), bin.n_columns());
    let outcome = optimize(&bin, &cfg)?;
    log::info!(
        "{}: {} leaves, depth {}, objective {}",
        outcome.status,
        outcome.objective.leaves,
        outcome.tree.depth(),
        outcome.value()
    );
    write(&a.out, &outcome.tree.to_json_string(&names))?;
    let report = RunReport::new(&outcome, &bin, &cfg, a.solve.timing).to_json_string();
    match &a.report {
        Some(p) => write(p, &report)?,
        None => emit(&report)?,
    }
    Ok(())
}

fn depth_bound(k: u64, weak_depth: Option<u32>, vc: Option<u64>) -> Result<()> {
    let vc = match (weak_depth, vc) {
        (Some(d), _) => vc_of_depth_trees(d)?,
        (None, Some(v)) => v,
        (None, None) => bail!("give --weak-depth or --vc"),
    };
    let bound = min_depth_for_ensemble(k, vc)?;
    log::info!("K = {k}, VC(B) = {vc}, inner = {}", bound.inner);
    emit(&bound.depth.to_string())?;
    Ok(())
}

/// Returns whether every fold finished.
fn benchmark(a: &BenchmarkArgs) -> Result<bool> {
    let raw = load_csv(&a.input)?;
    let mut cfg = BenchmarkConfig::new(a.reference.boosting(), a.solve.lambda, a.solve.depth);
    cfg.folds = a.folds;
    cfg.seed = a.fold_seed;
    cfg.threshold_guess = a.solve.guess_thresholds;
    cfg.lb_guess = a.solve.lb_guess;
    cfg.drop_tolerance = a.reference.drop_tolerance;
    cfg.time_limit_s = a.solve.time_limit_s;
    cfg.baseline = a.baseline;
    cfg.baseline_time_limit_s = a.baseline_time_limit_s;
    cfg.fold_parallelism = a.solve.parallelism();
    cfg.solver_parallelism = a.solve.parallelism();
    cfg.include_timing = a.solve.timing;
    let report = run_benchmark(&raw, &cfg)?;
    write(&a.out, &report.to_json_string())?;
    if let Some(p) = &a.csv {
        let file = fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
        report.write_csv(file)?;
    }
    let s = &report.summary;
    if let Some(q) = s.test_accuracy {
        log::info!(
            "{} of {} folds completed; median test accuracy {:.4}",
            s.completed,
            cfg.folds,
            q.median
        );
    }
    for f in report.folds.iter().filter(|f| f.result.is_none()) {
        log::error!(
            "fold {} failed: {}",
            f.fold,
            f.error.as_deref().unwrap_or("unknown error")
        );
    }
    Ok(s.failed.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Binarize { input, out } => binarize(&input, &out)?,
        Command::Guess {
            input,
            reference,
            batch_fraction,
            out,
            trace,
        } => guess(&input, &reference, batch_fraction, &out, &trace)?,
        Command::Train(a) => train(&a)?,
        Command::DepthBound { k, weak_depth, vc } => depth_bound(k, weak_depth, vc)?,
        Command::Benchmark(a) => return benchmark(&a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
