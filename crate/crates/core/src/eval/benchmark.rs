use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{kfold, EvalError, FoldPlan};
use crate::dataset::{full_binarize, RawDataset};
use crate::ensemble::{self, Accuracy, BoostingParams};
use crate::guess::{column_eliminate, EliminationParams, ReferenceLabels};
use crate::objective::Lambda;
use crate::parallel::Parallelism;
use crate::solver::{optimize, Counters, DepthLimit, SolveStatus, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub folds: usize,
    pub seed: u64,
    pub boosting: BoostingParams,
    pub threshold_guess: bool,
    pub lb_guess: bool,
    pub drop_tolerance: f64,
    pub lambda: Lambda,
    pub depth_limit: DepthLimit,
    pub time_limit_s: Option<f64>,
    /// Also solve each fold on the full binarization without lb guessing.
    pub baseline: bool,
    pub baseline_time_limit_s: Option<f64>,
    pub fold_parallelism: Parallelism,
    pub solver_parallelism: Parallelism,
    /// Record wall times; reports are then no longer byte-reproducible.
    pub include_timing: bool,
}

impl BenchmarkConfig {
    pub fn new(boosting: BoostingParams, lambda: Lambda, depth_limit: DepthLimit) -> Self {
        BenchmarkConfig {
            folds: 5,
            seed: 0,
            boosting,
            threshold_guess: true,
            lb_guess: true,
            drop_tolerance: 0.0,
            lambda,
            depth_limit,
            time_limit_s: None,
            baseline: false,
            baseline_time_limit_s: None,
            fold_parallelism: Parallelism::Sequential,
            solver_parallelism: Parallelism::Sequential,
            include_timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub status: SolveStatus,
    pub n_columns: usize,
    pub train_accuracy: f64,
    pub leaves: u64,
    pub objective: f64,
    pub counters: Counters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub status: SolveStatus,
    pub n_columns: usize,
    pub reference_train_accuracy: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub leaves: u64,
    pub depth: usize,
    pub objective: f64,
    pub counters: Counters,
    pub baseline: Option<BaselineRun>,
    /// Expanded subproblems with guessing over expanded without.
    pub expanded_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub tree: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub result: Option<FoldResult>,
    pub error: Option<String>,
}

impl FoldReport {
    /// Finished without error and without hitting the time limit.
    pub fn completed(&self) -> bool {
        self.result.as_ref().is_some_and(|r| r.status != SolveStatus::TimeLimit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub completed: usize,
    pub time_limited: Vec<usize>,
    pub failed: Vec<usize>,
    pub train_accuracy: Option<Quartiles>,
    pub test_accuracy: Option<Quartiles>,
    pub leaves: Option<Quartiles>,
    pub depth: Option<Quartiles>,
    pub expanded_ratio: Option<Quartiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve_time_s: Option<Quartiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub plan: FoldPlan,
    pub folds: Vec<FoldReport>,
    pub summary: Summary,
}

/// Linear-interpolation quantile of unsorted `values`.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

fn quartiles(values: &[f64]) -> Option<Quartiles> {
    Some(Quartiles {
        q1: quantile(values, 0.25)?,
        median: quantile(values, 0.5)?,
        q3: quantile(values, 0.75)?,
    })
}

fn seconds(s: Option<f64>) -> Option<Duration> {
    s.map(|v| Duration::from_secs_f64(v.max(0.0)))
}

fn run_fold(raw: &RawDataset, plan: &FoldPlan, fold: usize, cfg: &BenchmarkConfig) -> Result<FoldResult, EvalError> {
    let start = Instant::now();
    let train = raw.select(&plan.train(fold))?;
    let test = raw.select(plan.test(fold))?;
    let (bin, reference) = if cfg.threshold_guess {
        let params = EliminationParams {
            boosting: cfg.boosting,
            drop_tolerance: cfg.drop_tolerance,
            batch_fraction: None,
            parallelism: cfg.solver_parallelism,
        };
        let trace = column_eliminate(&train, params)?;
        let reference = ReferenceLabels::from_binary_ensemble(&trace.reference, &trace.reduced)?;
        (trace.reduced, reference)
    } else {
        let ens = ensemble::fit_with(&train, cfg.boosting, cfg.solver_parallelism)?;
        (full_binarize(&train), ReferenceLabels::from_ensemble(&ens, &train)?)
    };
    let reference_train_accuracy = reference.correct_count() as f64 / train.n_samples() as f64;

    let mut scfg = SolverConfig::new(cfg.lambda, cfg.depth_limit).with_parallelism(cfg.solver_parallelism);
    scfg.time_limit = seconds(cfg.time_limit_s);
    if cfg.lb_guess {
        scfg.lb_guess = Some(reference);
    }
    let out = optimize(&bin, &scfg)?;
    let test_pred = out.tree.predict_rows(test.rows())?;
    let test_accuracy = Accuracy::from_predictions(&test_pred, test.labels()).accuracy();
    let n = train.n_samples() as f64;

    let baseline = if cfg.baseline {
        let full = full_binarize(&train);
        let mut bcfg = SolverConfig::new(cfg.lambda, cfg.depth_limit).with_parallelism(cfg.solver_parallelism);
        bcfg.time_limit = seconds(cfg.baseline_time_limit_s);
        let b = optimize(&full, &bcfg)?;
        Some(BaselineRun {
            status: b.status,
            n_columns: full.n_columns(),
            train_accuracy: 1.0 - b.objective.errors as f64 / n,
            leaves: b.objective.leaves,
            objective: b.value(),
            counters: b.counters,
        })
    } else {
        None
    };
    let expanded_ratio = baseline
        .as_ref()
        .filter(|b| b.counters.expanded > 0)
        .map(|b| out.counters.expanded as f64 / b.counters.expanded as f64);

    Ok(FoldResult {
        status: out.status,
        n_columns: bin.n_columns(),
        reference_train_accuracy,
        train_accuracy: 1.0 - out.objective.errors as f64 / n,
        test_accuracy,
        leaves: out.objective.leaves,
        depth: out.tree.depth(),
        objective: out.value(),
        counters: out.counters,
        baseline,
        expanded_ratio,
        solve_time_s: cfg.include_timing.then_some(out.elapsed.as_secs_f64()),
        wall_time_s: cfg.include_timing.then(|| start.elapsed().as_secs_f64()),
        tree: out.tree.to_json(raw.feature_names()),
    })
}

/// Per fold: fit the reference, eliminate columns, solve, then score on the
/// training and held-out samples. Fold failures are recorded, not fatal.
pub fn run_benchmark(raw: &RawDataset, cfg: &BenchmarkConfig) -> Result<BenchmarkReport, EvalError> {
    let plan = kfold(raw.n_samples(), cfg.folds, cfg.seed)?;
    let folds: Vec<FoldReport> = cfg.fold_parallelism.map_range(plan.k, |i| {
        let outcome = run_fold(raw, &plan, i, cfg);
        if let Err(e) = &outcome {
            log::warn!("fold {i} failed: {e}");
        }
        let n_test = plan.test(i).len();
        FoldReport {
            fold: i,
            n_train: raw.n_samples() - n_test,
            n_test,
            error: outcome.as_ref().err().map(ToString::to_string),
            result: outcome.ok(),
        }
    });
    let done: Vec<&FoldResult> = folds
        .iter()
        .filter(|f| f.completed())
        .filter_map(|f| f.result.as_ref())
        .collect();
    let stat =
        |f: &dyn Fn(&FoldResult) -> Option<f64>| quartiles(&done.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
    let summary = Summary {
        completed: done.len(),
        time_limited: folds
            .iter()
            .filter(|f| f.result.as_ref().is_some_and(|r| r.status == SolveStatus::TimeLimit))
            .map(|f| f.fold)
            .collect(),
        failed: folds.iter().filter(|f| f.result.is_none()).map(|f| f.fold).collect(),
        train_accuracy: stat(&|r| Some(r.train_accuracy)),
        test_accuracy: stat(&|r| Some(r.test_accuracy)),
        leaves: stat(&|r| Some(r.leaves as f64)),
        depth: stat(&|r| Some(r.depth as f64)),
        expanded_ratio: stat(&|r| r.expanded_ratio),
        solve_time_s: stat(&|r| r.solve_time_s),
    };
    Ok(BenchmarkReport {
        config: cfg.clone(),
        plan,
        folds,
        summary,
    })
}

impl BenchmarkReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per fold.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "fold",
            "status",
            "n_train",
            "n_test",
            "n_columns",
            "train_accuracy",
            "test_accuracy",
            "leaves",
            "depth",
            "expanded",
            "baseline_expanded",
            "expanded_ratio",
            "error",
        ])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for f in &self.folds {
            let r = f.result.as_ref();
            w.write_record([
                f.fold.to_string(),
                opt(r.map(|r| r.status.to_string())),
                f.n_train.to_string(),
                f.n_test.to_string(),
                opt(r.map(|r| r.n_columns.to_string())),
                opt(r.map(|r| r.train_accuracy.to_string())),
                opt(r.map(|r| r.test_accuracy.to_string())),
                opt(r.map(|r| r.leaves.to_string())),
                opt(r.map(|r| r.depth.to_string())),
                opt(r.map(|r| r.counters.expanded.to_string())),
                opt(r
                    .and_then(|r| r.baseline.as_ref())
                    .map(|b| b.counters.expanded.to_string())),
                opt(r.and_then(|r| r.expanded_ratio).map(|x| x.to_string())),
                f.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
