//! The three guesses taken from the reference ensemble: a reduced threshold
//! set (column elimination), a depth bound, and per-sample reference labels
//! for lower-bound guessing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    binarize_with_thresholds, cmp_split, BinaryDataset, DatasetError, RawDataset, ThresholdEntry, ThresholdSet,
};
use crate::ensemble::{self, Accuracy, BoostedEnsemble, BoostingParams, EnsembleError};
use crate::parallel::Parallelism;
use crate::support::SupportSet;

#[derive(Debug, Error)]
pub enum GuessError {
    #[error("reference model predicts a single class")]
    DegenerateReference,
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("drop tolerance must lie in [0, 1], got {0}")]
    DropTolerance(f64),
    #[error("batch fraction must lie in (0, 1], got {0}")]
    BatchFraction(f64),
    #[error("depth {0} too large: 2^d must fit in 63 bits")]
    DepthOverflow(u32),
    #[error("theorem hypothesis violated: {name} = {value} but must be at least 3")]
    Hypothesis { name: &'static str, value: u64 },
    #[error("prediction vector has {found} entries but the dataset has {expected} samples")]
    LengthMismatch { expected: usize, found: usize },
}

/// Records which refit space column elimination used.
pub const REFIT_SPACE: &str = "binarized indicator columns of the surviving thresholds";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliminationParams {
    pub boosting: BoostingParams,
    /// Stop once the refit correct-count falls below `⌈(1 - tol) * initial⌉`.
    pub drop_tolerance: f64,
    /// Remove this fraction of the surviving thresholds per refit instead of
    /// a single one.
    pub batch_fraction: Option<f64>,
    pub parallelism: Parallelism,
}

impl EliminationParams {
    pub fn new(boosting: BoostingParams) -> Self {
        EliminationParams {
            boosting,
            drop_tolerance: 0.0,
            batch_fraction: None,
            parallelism: Parallelism::Sequential,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliminationStep {
    pub removed: Vec<(usize, f64)>,
    pub refit_correct: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EliminationTrace {
    pub n_samples: usize,
    pub initial_correct: usize,
    /// Minimum correct-count an accepted refit must reach.
    pub bar: usize,
    pub initial_thresholds: ThresholdSet,
    /// Accepted removals, in order.
    pub steps: Vec<EliminationStep>,
    /// The removal that triggered the stop, undone.
    pub rejected: Option<EliminationStep>,
    pub final_thresholds: ThresholdSet,
    /// `T'`: the reference over the final reduced columns, in indicator
    /// space (feature `c` is column `c` of `reduced`).
    pub reference: BoostedEnsemble,
    pub final_correct: usize,
    pub reduced: BinaryDataset,
}

fn ranked(mut entries: Vec<ThresholdEntry>) -> Vec<ThresholdEntry> {
    entries.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(cmp_split(a.key(), b.key())));
    entries
}

/// Iteratively drops the globally least important threshold and refits on
/// the surviving indicator columns until training accuracy drops.
pub fn column_eliminate(raw: &RawDataset, params: EliminationParams) -> Result<EliminationTrace, GuessError> {
    let tol = params.drop_tolerance;
    if !(0.0..=1.0).contains(&tol) {
        return Err(GuessError::DropTolerance(tol));
    }
    if let Some(f) = params.batch_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(GuessError::BatchFraction(f));
        }
    }
    let reference = ensemble::fit_with(raw, params.boosting, params.parallelism)?;
    if reference.is_degenerate() {
        return Err(GuessError::DegenerateReference);
    }
    let initial_correct = reference.training_accuracy(raw)?.correct;
    let bar = (((1.0 - tol) * initial_correct as f64).ceil() as usize).min(initial_correct);
    let initial_thresholds = reference.extract_thresholds();

    let mut current = initial_thresholds.clone();
    let mut ranking = ranked(initial_thresholds.entries().to_vec());
    // the full-data reference only splits on extracted thresholds, so it is
    // itself an ensemble over the initial reduced columns
    let mut current_ens = reference.to_binary_space(&current.sorted_pairs())?;
    let mut steps = Vec::new();
    let mut rejected = None;

    while !current.is_empty() {
        let k = match params.batch_fraction {
            Some(f) => ((f * current.len() as f64).floor() as usize).clamp(1, current.len()),
            None => 1,
        };
        let keep = ranking.len() - k;
        let removed: Vec<(usize, f64)> = ranking[keep..].iter().map(ThresholdEntry::key).collect();
        let survivors = ThresholdSet::from_pairs(ranking[..keep].iter().map(ThresholdEntry::key))?;
        let bin = binarize_with_thresholds(raw, &survivors)?;
        let refit = ensemble::fit_binary(&bin, params.boosting, params.parallelism)?;
        let refit_correct = Accuracy::from_predictions(&refit.predict_binary(&bin)?, raw.labels()).correct;
        log::debug!(
            "column elimination: removed {:?}, {} thresholds left, correct {}/{} (bar {})",
            removed,
            survivors.len(),
            refit_correct,
            raw.n_samples(),
            bar
        );
        let step = EliminationStep { removed, refit_correct };
        if refit_correct < bar {
            rejected = Some(step);
            break;
        }
        steps.push(step);
        let pairs = survivors.sorted_pairs();
        let mut imp = vec![0.0; pairs.len()];
        for s in refit.split_importance() {
            imp[s.feature] += s.importance;
        }
        ranking = ranked(
            pairs
                .iter()
                .zip(imp)
                .map(|(&(feature, threshold), importance)| ThresholdEntry {
                    feature,
                    threshold,
                    importance,
                })
                .collect(),
        );
        current = ThresholdSet::new(ranking.clone())?;
        current_ens = refit;
    }

    let reduced = binarize_with_thresholds(raw, &current)?;
    let final_correct = Accuracy::from_predictions(&current_ens.predict_binary(&reduced)?, raw.labels()).correct;
    Ok(EliminationTrace {
        n_samples: raw.n_samples(),
        initial_correct,
        bar,
        initial_thresholds,
        steps,
        rejected,
        final_thresholds: current,
        reference: current_ens,
        final_correct,
        reduced,
    })
}

#[derive(Serialize)]
struct TraceJson<'a> {
    refit_space: &'static str,
    n_samples: usize,
    initial_correct: usize,
    initial_accuracy: f64,
    bar: usize,
    initial_thresholds: Vec<(usize, f64)>,
    steps: Vec<StepJson<'a>>,
    rejected: Option<StepJson<'a>>,
    final_correct: usize,
    final_accuracy: f64,
    final_thresholds: Vec<ThresholdJson<'a>>,
}

#[derive(Serialize)]
struct StepJson<'a> {
    removed: Vec<ThresholdJson<'a>>,
    refit_correct: usize,
    refit_accuracy: f64,
}

#[derive(Serialize)]
struct ThresholdJson<'a> {
    feature: &'a str,
    feature_index: usize,
    threshold: f64,
}

impl EliminationTrace {
    /// JSON trace: refit space, removed thresholds in order with refit
    /// accuracies, and the final threshold list.
    pub fn to_json_string(&self, names: &[String]) -> String {
        let th = |(f, t): (usize, f64)| ThresholdJson {
            feature: names.get(f).map(String::as_str).unwrap_or(""),
            feature_index: f,
            threshold: t,
        };
        let n = self.n_samples as f64;
        let step = |s: &EliminationStep| StepJson {
            removed: s.removed.iter().copied().map(th).collect(),
            refit_correct: s.refit_correct,
            refit_accuracy: s.refit_correct as f64 / n,
        };
        let doc = TraceJson {
            refit_space: REFIT_SPACE,
            n_samples: self.n_samples,
            initial_correct: self.initial_correct,
            initial_accuracy: self.initial_correct as f64 / n,
            bar: self.bar,
            initial_thresholds: self
                .initial_thresholds
                .entries()
                .iter()
                .map(ThresholdEntry::key)
                .collect(),
            steps: self.steps.iter().map(step).collect(),
            rejected: self.rejected.as_ref().map(step),
            final_correct: self.final_correct,
            final_accuracy: self.final_correct as f64 / n,
            final_thresholds: self.final_thresholds.sorted_pairs().into_iter().map(th).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("trace serializes")
    }
}

/// VC dimension of depth-`d` binary trees over enough features: `2^d`.
pub fn vc_of_depth_trees(d: u32) -> Result<u64, GuessError> {
    if d > 62 {
        return Err(GuessError::DepthOverflow(d));
    }
    Ok(1u64 << d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthBound {
    pub depth: u32,
    /// `(K·VC + K)·(3 ln(K·VC + K) + 2)`.
    pub inner: f64,
}

/// Smallest `d` with `2^d >= (K·VC + K)·(3 ln(K·VC + K) + 2)`: single trees
/// of depth `d` are at least as expressive as a `K`-member ensemble.
pub fn min_depth_for_ensemble(k: u64, vc: u64) -> Result<DepthBound, GuessError> {
    if k < 3 {
        return Err(GuessError::Hypothesis { name: "K", value: k });
    }
    if vc < 3 {
        return Err(GuessError::Hypothesis {
            name: "VC(B)",
            value: vc,
        });
    }
    let a = (k as f64) * (vc as f64) + k as f64;
    let inner = a * (3.0 * a.ln() + 2.0);
    let mut depth = inner.log2().ceil().max(0.0) as u32;
    // guard against log2 rounding at exact powers of two
    while 2f64.powi(depth as i32) < inner {
        depth += 1;
    }
    while depth > 0 && 2f64.powi(depth as i32 - 1) >= inner {
        depth -= 1;
    }
    Ok(DepthBound { depth, inner })
}

/// Reference predictions and the samples they get wrong.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferenceLabels {
    pub predictions: Vec<u8>,
    pub incorrect: SupportSet,
}

impl ReferenceLabels {
    pub fn from_predictions(predictions: Vec<u8>, labels: &[u8]) -> Result<Self, GuessError> {
        if predictions.len() != labels.len() {
            return Err(GuessError::LengthMismatch {
                expected: labels.len(),
                found: predictions.len(),
            });
        }
        let incorrect =
            SupportSet::from_indices(labels.len(), (0..labels.len()).filter(|&i| predictions[i] != labels[i]));
        Ok(ReferenceLabels { predictions, incorrect })
    }

    /// Reference evaluated on raw rows.
    pub fn from_ensemble(ens: &BoostedEnsemble, raw: &RawDataset) -> Result<Self, GuessError> {
        Self::from_predictions(ens.predict_class(raw)?, raw.labels())
    }

    /// Reference fitted in indicator space, evaluated on `bin`.
    pub fn from_binary_ensemble(ens: &BoostedEnsemble, bin: &BinaryDataset) -> Result<Self, GuessError> {
        Self::from_predictions(ens.predict_binary(bin)?, bin.labels())
    }

    pub fn n_samples(&self) -> usize {
        self.predictions.len()
    }

    pub fn correct_count(&self) -> usize {
        self.n_samples() - self.incorrect.count()
    }

    pub fn correct(&self) -> SupportSet {
        self.incorrect.complement()
    }

    /// True when every prediction is the same class.
    pub fn is_single_class(&self) -> bool {
        self.predictions.windows(2).all(|w| w[0] == w[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vc_values() {
        assert_eq!(vc_of_depth_trees(0).unwrap(), 1);
        assert_eq!(vc_of_depth_trees(3).unwrap(), 8);
        assert_eq!(vc_of_depth_trees(10).unwrap(), 1024);
        assert!(vc_of_depth_trees(63).is_err());
    }

    #[test]
    fn depth_special_cases() {
        assert_eq!(min_depth_for_ensemble(10, 8).unwrap().depth, 11);
        assert_eq!(min_depth_for_ensemble(100, 8).unwrap().depth, 15);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn depth_matches_high_precision_oracle() {
        // reference values evaluated at 50 significant digits
        let cases = [
            (3, 3, 113.45663939236801116826954127419963826874566975556, 7),
            (10, 8, 1394.9486109891715680382901207029422165619423031541, 11),
            (100, 8, 20166.465860975639027231478134677205526142397050838, 15),
            (1000, 16, 530789.39977495600974747895807823717707796688140208, 20),
            (7, 5, 554.94637190370440654564659282980913229736950314237, 10),
        ];
        for (k, vc, inner, depth) in cases {
            let b = min_depth_for_ensemble(k, vc).unwrap();
            assert_eq!(b.depth, depth, "K={k} VC={vc}");
            assert!((b.inner - inner).abs() / inner < 1e-12);
        }
    }

    #[test]
    fn depth_hypotheses() {
        assert!(matches!(
            min_depth_for_ensemble(2, 8),
            Err(GuessError::Hypothesis { name: "K", .. })
        ));
        assert!(matches!(
            min_depth_for_ensemble(5, 2),
            Err(GuessError::Hypothesis { name: "VC(B)", .. })
        ));
    }

    #[test]
    fn reference_label_sets() {
        let perfect = ReferenceLabels::from_predictions(vec![0, 1, 1], &[0, 1, 1]).unwrap();
        assert!(perfect.incorrect.is_empty());
        let constant = ReferenceLabels::from_predictions(vec![0, 0, 0], &[0, 1, 1]).unwrap();
        assert_eq!(constant.incorrect.iter().collect::<Vec<_>>(), vec![1, 2]);
        assert!(constant.is_single_class());
        assert!(ReferenceLabels::from_predictions(vec![0], &[0, 1]).is_err());
    }

    proptest! {
        #[test]
        fn depth_satisfies_shattering_inequality(k in 3u64..=10_000, vc in 3u64..=10_000) {
            let b = min_depth_for_ensemble(k, vc).unwrap();
            let a = (k * vc + k) as f64;
            let inner = a * (3.0 * a.ln() + 2.0);
            prop_assert!(2f64.powi(b.depth as i32) >= inner);
            prop_assert!(2f64.powi(b.depth as i32 - 1) < inner);
        }

        #[test]
        fn incorrect_and_correct_partition(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..100)) {
            let (pred, labels): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let r = ReferenceLabels::from_predictions(pred.clone(), &labels).unwrap();
            let correct = r.correct();
            prop_assert_eq!(correct.intersection_count(&r.incorrect), 0);
            prop_assert_eq!(correct.count() + r.incorrect.count(), labels.len());
            for i in 0..labels.len() {
                prop_assert_eq!(r.incorrect.contains(i), pred[i] != labels[i]);
            }
        }
    }
}
