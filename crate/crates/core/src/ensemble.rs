//! Gradient-boosted regression trees on logistic loss: the reference model.
//!
//! Weak learners are exact greedy CART regression trees fit level-wise to the
//! negative gradient, with one Newton step per leaf.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{midpoint, BinaryDataset, RawDataset, ThresholdEntry, ThresholdSet};
use crate::parallel::Parallelism;

/// Leaf scores are clamped to `[-LEAF_CLAMP, LEAF_CLAMP]`.
pub const LEAF_CLAMP: f64 = 4.0;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("n_est must be at least 1")]
    NoEstimators,
    #[error("max_depth must be at least 1")]
    ZeroDepth,
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
    #[error("row width {found} does not match the {expected} training features")]
    WidthMismatch { expected: usize, found: usize },
    #[error("split on feature {feature} at {threshold} has no matching column")]
    MissingColumn { feature: usize, threshold: f64 },
    #[error("ensemble json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_est: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl BoostingParams {
    pub fn new(n_est: usize, max_depth: usize) -> Self {
        BoostingParams {
            n_est,
            max_depth,
            learning_rate: 0.1,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    fn validate(&self) -> Result<(), EnsembleError> {
        if self.n_est == 0 {
            return Err(EnsembleError::NoEstimators);
        }
        if self.max_depth == 0 {
            return Err(EnsembleError::ZeroDepth);
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(EnsembleError::LearningRate(self.learning_rate));
        }
        Ok(())
    }
}

/// A node of a weak tree. `left` takes `x[feature] <= threshold`.
///
/// `samples`/`positives` count the training rows (and positive labels) routed
/// to the node; Gini importance is computed from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeakNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<WeakNode>,
        right: Box<WeakNode>,
        samples: usize,
        positives: usize,
    },
    Leaf {
        score: f64,
        samples: usize,
        positives: usize,
    },
}

impl WeakNode {
    pub fn samples(&self) -> usize {
        match self {
            WeakNode::Split { samples, .. } | WeakNode::Leaf { samples, .. } => *samples,
        }
    }

    pub fn positives(&self) -> usize {
        match self {
            WeakNode::Split { positives, .. } | WeakNode::Leaf { positives, .. } => *positives,
        }
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                WeakNode::Leaf { score, .. } => return *score,
                WeakNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            WeakNode::Leaf { .. } => 0,
            WeakNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Visits every internal node as `(feature, threshold, node, left, right)`.
    pub fn for_each_split<F: FnMut(usize, f64, &WeakNode, &WeakNode, &WeakNode)>(&self, f: &mut F) {
        if let WeakNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = self
        {
            f(*feature, *threshold, self, left, right);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakTree {
    pub max_depth: usize,
    pub root: WeakNode,
}

impl WeakTree {
    pub fn score(&self, row: &[f64]) -> f64 {
        self.root.score(row)
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub trees: Vec<WeakTree>,
    pub learning_rate: f64,
    /// Log-odds of the training base rate.
    pub initial_score: f64,
    pub n_est: usize,
    pub weak_depth: usize,
    pub n_features: usize,
    pub n_train: usize,
    /// Set when the training labels were all one class; the ensemble then
    /// predicts that class everywhere and has no trees.
    pub constant_class: Option<u8>,
}

/// Correct-count and accuracy of a predictor on labelled data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn from_predictions(pred: &[u8], labels: &[u8]) -> Accuracy {
        Accuracy {
            correct: pred.iter().zip(labels).filter(|(a, b)| a == b).count(),
            total: labels.len(),
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn errors(&self) -> usize {
        self.total - self.correct
    }
}

/// Column-major training matrix.
struct Matrix<'a> {
    columns: Vec<Vec<f64>>,
    labels: &'a [u8],
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn fit(raw: &RawDataset, params: BoostingParams) -> Result<BoostedEnsemble, EnsembleError> {
    fit_with(raw, params, Parallelism::Sequential)
}

pub fn fit_with(raw: &RawDataset, params: BoostingParams, par: Parallelism) -> Result<BoostedEnsemble, EnsembleError> {
    let columns = (0..raw.n_features()).map(|j| raw.column(j).collect()).collect();
    fit_matrix(
        Matrix {
            columns,
            labels: raw.labels(),
        },
        params,
        par,
    )
}

/// Fits on the 0/1 indicator columns of a binarized dataset.
pub fn fit_binary(
    bin: &BinaryDataset,
    params: BoostingParams,
    par: Parallelism,
) -> Result<BoostedEnsemble, EnsembleError> {
    let n = bin.n_samples();
    let columns = bin
        .columns()
        .iter()
        .map(|c| (0..n).map(|i| if c.contains(i) { 1.0 } else { 0.0 }).collect())
        .collect();
    fit_matrix(
        Matrix {
            columns,
            labels: bin.labels(),
        },
        params,
        par,
    )
}

fn fit_matrix(x: Matrix<'_>, params: BoostingParams, par: Parallelism) -> Result<BoostedEnsemble, EnsembleError> {
    params.validate()?;
    let n = x.labels.len();
    let m = x.columns.len();
    let positives = x.labels.iter().filter(|&&y| y == 1).count();
    let mut ens = BoostedEnsemble {
        trees: Vec::with_capacity(params.n_est),
        learning_rate: params.learning_rate,
        initial_score: 0.0,
        n_est: params.n_est,
        weak_depth: params.max_depth,
        n_features: m,
        n_train: n,
        constant_class: None,
    };
    if positives == 0 || positives == n {
        ens.constant_class = Some(if positives == 0 { 0 } else { 1 });
        return Ok(ens);
    }
    let base = positives as f64 / n as f64;
    ens.initial_score = (base / (1.0 - base)).ln();

    let order: Vec<Vec<u32>> = x
        .columns
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            idx
        })
        .collect();
    let y: Vec<f64> = x.labels.iter().map(|&v| v as f64).collect();
    let mut margin = vec![ens.initial_score; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut feature_order: Vec<usize> = (0..m).collect();

    for _ in 0..params.n_est {
        feature_order.shuffle(&mut rng);
        let prob: Vec<f64> = margin.iter().map(|&f| sigmoid(f)).collect();
        let grad: Vec<f64> = y.iter().zip(&prob).map(|(y, p)| y - p).collect();
        let hess: Vec<f64> = prob.iter().map(|p| p * (1.0 - p)).collect();
        let (root, leaf_of) = grow_tree(&x, &order, &grad, &hess, &feature_order, params.max_depth, par);
        for (i, f) in margin.iter_mut().enumerate() {
            *f += params.learning_rate * leaf_of[i];
        }
        ens.trees.push(WeakTree {
            max_depth: params.max_depth,
            root,
        });
    }
    Ok(ens)
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    threshold: f64,
    rank: usize,
    feature: usize,
}

/// Grows one regression tree level by level. Returns the tree and the leaf
/// score of every training row.
fn grow_tree(
    x: &Matrix<'_>,
    order: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    feature_order: &[usize],
    max_depth: usize,
    par: Parallelism,
) -> (WeakNode, Vec<f64>) {
    const NONE: usize = usize::MAX;
    let n = grad.len();
    let mut arena = vec![ArenaNode {
        split: None,
        samples: n,
        positives: x.labels.iter().filter(|&&y| y == 1).count(),
        grad_sum: grad.iter().sum(),
    }];
    let mut node_of = vec![0usize; n];
    let mut open = vec![0usize];

    for _level in 0..max_depth {
        if open.is_empty() {
            break;
        }
        let k = open.len();
        let mut slot = vec![NONE; arena.len()];
        for (s, &a) in open.iter().enumerate() {
            slot[a] = s;
        }
        let per_feature: Vec<Vec<Option<Candidate>>> = par.map_range(feature_order.len(), |rank| {
            let j = feature_order[rank];
            let col = &x.columns[j];
            let mut cnt = vec![0usize; k];
            let mut sum = vec![0f64; k];
            let mut last = vec![0f64; k];
            let mut best: Vec<Option<Candidate>> = vec![None; k];
            for &i in &order[j] {
                let i = i as usize;
                let s = slot[node_of[i]];
                if s == NONE {
                    continue;
                }
                let v = col[i];
                let node = &arena[open[s]];
                if cnt[s] > 0 && v != last[s] {
                    let nl = cnt[s] as f64;
                    let nr = (node.samples - cnt[s]) as f64;
                    let sl = sum[s];
                    let sr = node.grad_sum - sl;
                    let gain = sl * sl / nl + sr * sr / nr - node.grad_sum * node.grad_sum / node.samples as f64;
                    if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                        best[s] = Some(Candidate {
                            gain,
                            threshold: midpoint(last[s], v),
                            rank,
                            feature: j,
                        });
                    }
                }
                cnt[s] += 1;
                sum[s] += grad[i];
                last[s] = v;
            }
            best
        });
        let mut chosen: Vec<Option<Candidate>> = vec![None; k];
        for best in &per_feature {
            for (s, c) in best.iter().enumerate() {
                if let Some(c) = *c {
                    // ties keep the earliest feature in the seeded scan order
                    if chosen[s].is_none_or(|b| c.gain > b.gain || (c.gain == b.gain && c.rank < b.rank)) {
                        chosen[s] = Some(c);
                    }
                }
            }
        }
        let mut next_open = Vec::new();
        for (s, &a) in open.iter().enumerate() {
            if let Some(c) = chosen[s] {
                let left = arena.len();
                arena.push(ArenaNode::empty());
                arena.push(ArenaNode::empty());
                arena[a].split = Some((c.feature, c.threshold, left, left + 1));
                next_open.push(left);
                next_open.push(left + 1);
            }
        }
        for i in 0..n {
            if let Some((f, t, l, r)) = arena[node_of[i]].split {
                let child = if x.columns[f][i] <= t { l } else { r };
                node_of[i] = child;
                let node = &mut arena[child];
                node.samples += 1;
                node.positives += x.labels[i] as usize;
                node.grad_sum += grad[i];
            }
        }
        open = next_open;
    }

    let mut hess_sum = vec![0f64; arena.len()];
    for i in 0..n {
        hess_sum[node_of[i]] += hess[i];
    }
    let scores: Vec<f64> = arena
        .iter()
        .zip(&hess_sum)
        .map(|(node, &h)| {
            if h.abs() < 1e-150 {
                0.0
            } else {
                (node.grad_sum / h).clamp(-LEAF_CLAMP, LEAF_CLAMP)
            }
        })
        .collect();
    let leaf_scores = node_of.iter().map(|&a| scores[a]).collect();
    (build_node(&arena, &scores, 0), leaf_scores)
}

struct ArenaNode {
    split: Option<(usize, f64, usize, usize)>,
    samples: usize,
    positives: usize,
    grad_sum: f64,
}

impl ArenaNode {
    fn empty() -> Self {
        ArenaNode {
            split: None,
            samples: 0,
            positives: 0,
            grad_sum: 0.0,
        }
    }
}

fn build_node(arena: &[ArenaNode], scores: &[f64], a: usize) -> WeakNode {
    let node = &arena[a];
    match node.split {
        Some((feature, threshold, l, r)) => WeakNode::Split {
            feature,
            threshold,
            left: Box::new(build_node(arena, scores, l)),
            right: Box::new(build_node(arena, scores, r)),
            samples: node.samples,
            positives: node.positives,
        },
        None => WeakNode::Leaf {
            score: scores[a],
            samples: node.samples,
            positives: node.positives,
        },
    }
}

/// Gini importance of one `(feature, threshold)` split, summed over every
/// node of the ensemble that uses it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitImportance {
    pub feature: usize,
    pub threshold: f64,
    pub importance: f64,
}

fn gini(samples: usize, positives: usize) -> f64 {
    if samples == 0 {
        return 0.0;
    }
    let p = positives as f64 / samples as f64;
    2.0 * p * (1.0 - p)
}

impl BoostedEnsemble {
    pub fn is_degenerate(&self) -> bool {
        self.constant_class.is_some()
    }

    fn check_width(&self, row: &[f64]) -> Result<(), EnsembleError> {
        if row.len() != self.n_features {
            return Err(EnsembleError::WidthMismatch {
                expected: self.n_features,
                found: row.len(),
            });
        }
        Ok(())
    }

    /// `initial_score + learning_rate * Σ tree scores`.
    pub fn margin(&self, row: &[f64]) -> Result<f64, EnsembleError> {
        self.check_width(row)?;
        Ok(self.initial_score + self.learning_rate * self.trees.iter().map(|t| t.score(row)).sum::<f64>())
    }

    /// Class 1 iff the margin is strictly positive.
    pub fn predict_row(&self, row: &[f64]) -> Result<u8, EnsembleError> {
        self.check_width(row)?;
        if let Some(c) = self.constant_class {
            return Ok(c);
        }
        Ok(u8::from(self.margin(row)? > 0.0))
    }

    pub fn predict_rows<'a, I>(&self, rows: I) -> Result<Vec<u8>, EnsembleError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        rows.into_iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn predict_class(&self, raw: &RawDataset) -> Result<Vec<u8>, EnsembleError> {
        self.predict_rows(raw.rows())
    }

    /// Predictions for an ensemble fitted on indicator columns.
    pub fn predict_binary(&self, bin: &BinaryDataset) -> Result<Vec<u8>, EnsembleError> {
        bin.to_indicator_rows().iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn training_accuracy(&self, raw: &RawDataset) -> Result<Accuracy, EnsembleError> {
        Ok(Accuracy::from_predictions(&self.predict_class(raw)?, raw.labels()))
    }

    /// Mean logistic loss after each boosting stage (index 0 is the prior).
    pub fn staged_log_loss(&self, raw: &RawDataset) -> Result<Vec<f64>, EnsembleError> {
        if self.is_degenerate() {
            return Ok(vec![0.0]);
        }
        let mut margins = vec![self.initial_score; raw.n_samples()];
        let loss = |m: &[f64]| {
            m.iter()
                .zip(raw.labels())
                .map(|(&f, &y)| {
                    // log(1 + e^f) - y f, computed stably
                    let softplus = if f > 0.0 {
                        f + (-f).exp().ln_1p()
                    } else {
                        f.exp().ln_1p()
                    };
                    softplus - y as f64 * f
                })
                .sum::<f64>()
                / m.len() as f64
        };
        let mut out = vec![loss(&margins)];
        for t in &self.trees {
            for (i, row) in raw.rows().enumerate() {
                self.check_width(row)?;
                margins[i] += self.learning_rate * t.score(row);
            }
            out.push(loss(&margins));
        }
        Ok(out)
    }

    /// Weighted Gini decrease per split, summed over all occurrences, sorted
    /// by `(feature, threshold)`.
    pub fn split_importance(&self) -> Vec<SplitImportance> {
        let total = self.n_train as f64;
        let mut acc: Vec<SplitImportance> = Vec::new();
        for tree in &self.trees {
            tree.root.for_each_split(&mut |feature, threshold, node, left, right| {
                let n = node.samples() as f64;
                let decrease = gini(node.samples(), node.positives())
                    - left.samples() as f64 / n * gini(left.samples(), left.positives())
                    - right.samples() as f64 / n * gini(right.samples(), right.positives());
                let contribution = (n / total * decrease).max(0.0);
                match acc
                    .iter_mut()
                    .find(|e| e.feature == feature && e.threshold == threshold)
                {
                    Some(e) => e.importance += contribution,
                    None => acc.push(SplitImportance {
                        feature,
                        threshold,
                        importance: contribution,
                    }),
                }
            });
        }
        acc.sort_by(|a, b| a.feature.cmp(&b.feature).then(a.threshold.total_cmp(&b.threshold)));
        acc
    }

    /// Every split used by the ensemble, most important first; ties are
    /// broken by ascending `(feature, threshold)`.
    pub fn extract_thresholds(&self) -> ThresholdSet {
        let mut entries: Vec<ThresholdEntry> = self
            .split_importance()
            .into_iter()
            .map(|s| ThresholdEntry {
                feature: s.feature,
                threshold: s.threshold,
                importance: s.importance,
            })
            .collect();
        entries.sort_by(|a, b| {
            b.importance
                .total_cmp(&a.importance)
                .then(a.feature.cmp(&b.feature))
                .then(a.threshold.total_cmp(&b.threshold))
        });
        ThresholdSet::new(entries).expect("split keys are deduplicated")
    }

    /// Re-expresses a raw-feature ensemble over indicator columns.
    ///
    /// `columns[c]` is the `(feature, threshold)` of column `c`. A raw split
    /// `x_f <= θ` (left) becomes `bit_c <= 0.5`, which holds when the bit is 0,
    /// so the children swap.
    pub fn to_binary_space(&self, columns: &[(usize, f64)]) -> Result<BoostedEnsemble, EnsembleError> {
        fn convert(node: &WeakNode, columns: &[(usize, f64)]) -> Result<WeakNode, EnsembleError> {
            Ok(match node {
                WeakNode::Leaf { .. } => node.clone(),
                WeakNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    samples,
                    positives,
                } => {
                    let c = columns
                        .iter()
                        .position(|&(f, t)| f == *feature && t == *threshold)
                        .ok_or(EnsembleError::MissingColumn {
                            feature: *feature,
                            threshold: *threshold,
                        })?;
                    WeakNode::Split {
                        feature: c,
                        threshold: 0.5,
                        left: Box::new(convert(right, columns)?),
                        right: Box::new(convert(left, columns)?),
                        samples: *samples,
                        positives: *positives,
                    }
                }
            })
        }
        let trees = self
            .trees
            .iter()
            .map(|t| {
                Ok(WeakTree {
                    max_depth: t.max_depth,
                    root: convert(&t.root, columns)?,
                })
            })
            .collect::<Result<Vec<_>, EnsembleError>>()?;
        Ok(BoostedEnsemble {
            trees,
            n_features: columns.len(),
            ..self.clone()
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<BoostedEnsemble, EnsembleError> {
        Ok(serde_json::from_str(text)?)
    }
}
