use serde::{Deserialize, Serialize};

use super::{Counters, SolveStatus, SolverConfig, SolverOutcome};
use crate::dataset::BinaryDataset;

/// Machine-readable summary of one solver run.
///
/// Wall time is only included on request so that reruns serialize
/// identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: SolveStatus,
    pub lambda: String,
    pub depth_limit: String,
    pub n_samples: usize,
    pub n_columns: usize,
    pub errors: u64,
    pub leaves: u64,
    pub depth: usize,
    pub loss: f64,
    pub objective: f64,
    pub training_accuracy: f64,
    pub lb_guess: bool,
    pub lb_guess_refused: bool,
    pub equiv_points_bound: bool,
    pub counters: Counters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl RunReport {
    pub fn new(outcome: &SolverOutcome, bin: &BinaryDataset, cfg: &SolverConfig, include_timing: bool) -> Self {
        let reg = &outcome.regularizer;
        let n = bin.n_samples();
        RunReport {
            status: outcome.status,
            lambda: cfg.lambda.to_string(),
            depth_limit: cfg.depth_limit.to_string(),
            n_samples: n,
            n_columns: bin.n_columns(),
            errors: outcome.objective.errors,
            leaves: outcome.objective.leaves,
            depth: outcome.tree.depth(),
            loss: outcome.objective.loss(reg),
            objective: outcome.objective.value(reg),
            training_accuracy: 1.0 - outcome.objective.errors as f64 / n as f64,
            lb_guess: cfg.lb_guess.is_some() && !outcome.lb_guess_refused,
            lb_guess_refused: outcome.lb_guess_refused,
            equiv_points_bound: cfg.use_equiv_points_bound,
            counters: outcome.counters,
            wall_time_s: include_timing.then_some(outcome.elapsed.as_secs_f64()),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
