//! Branch-and-bound search for the tree minimizing `errors / N + lambda *
//! leaves`, optionally under a depth limit, with optional lower-bound
//! guessing from reference labels.
//!
//! Subproblems are keyed by (support, remaining depth) and searched
//! depth-first with budgets: `solve(s, d, budget)` either returns the exact
//! optimum of the subproblem or reports that it is at least `budget`.
//!
//! Tie policy: every subtree minimizes, in order, the objective, the leaf
//! count, the depth, and the index of its root column. A tree is the leaf
//! when a split cannot beat it.

mod bounds;
mod report;

pub use bounds::{equiv_points_lb, lb_guess_value, leaf_objective};
pub use report::RunReport;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{equivalence_classes, BinaryDataset};
use crate::guess::ReferenceLabels;
use crate::objective::{Lambda, Objective, Regularizer};
use crate::parallel::Parallelism;
use crate::support::SupportSet;
use crate::tree::Tree;
use bounds::{leaf_scale, Bounds, NodeInfo};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthLimit {
    Bounded(u32),
    Unbounded,
}

impl FromStr for DepthLimit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "none" => Ok(DepthLimit::Unbounded),
            t => match t.parse::<u32>() {
                Ok(d) if d >= 1 => Ok(DepthLimit::Bounded(d)),
                _ => Err(format!("depth limit must be a positive integer or \"none\", got {s:?}")),
            },
        }
    }
}

impl fmt::Display for DepthLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DepthLimit::Bounded(d) => write!(f, "{d}"),
            DepthLimit::Unbounded => f.write_str("none"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// Proven optimal.
    Optimal,
    /// The guessed lower bounds closed or pruned at least one subproblem.
    GuessCertified,
    /// The time budget expired; the incumbent is returned.
    TimeLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GuessCertified => "guess-certified",
            SolveStatus::TimeLimit => "time-limit",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Counters {
    pub created: u64,
    /// Distinct subproblems whose splits were scanned at least once.
    pub expanded: u64,
    pub closed_by_guess: u64,
    pub cache_hits: u64,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("depth limit must be at least 1")]
    ZeroDepth,
    #[error("reference labels cover {found} samples but the dataset has {expected}")]
    ReferenceLength { expected: usize, found: usize },
    #[error("support has {found} samples but the dataset has {expected}")]
    SupportLength { expected: usize, found: usize },
    #[error("empty support")]
    EmptySupport,
    #[error(
        "cache limit of {limit} subproblems exceeded ({} created, {} expanded, {} closed by guess, {} cache hits)",
        counters.created, counters.expanded, counters.closed_by_guess, counters.cache_hits
    )]
    CacheLimit { limit: usize, counters: Counters },
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub lambda: Lambda,
    pub depth_limit: DepthLimit,
    pub lb_guess: Option<ReferenceLabels>,
    pub use_equiv_points_bound: bool,
    pub time_limit: Option<Duration>,
    /// Maximum number of cached subproblems before the run aborts.
    pub max_cache_entries: Option<usize>,
    pub parallelism: Parallelism,
}

impl SolverConfig {
    pub fn new(lambda: Lambda, depth_limit: DepthLimit) -> Self {
        SolverConfig {
            lambda,
            depth_limit,
            lb_guess: None,
            use_equiv_points_bound: true,
            time_limit: None,
            max_cache_entries: None,
            parallelism: Parallelism::Sequential,
        }
    }

    pub fn with_lb_guess(mut self, reference: ReferenceLabels) -> Self {
        self.lb_guess = Some(reference);
        self
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn with_equiv_points_bound(mut self, on: bool) -> Self {
        self.use_equiv_points_bound = on;
        self
    }

    pub fn with_max_cache_entries(mut self, limit: usize) -> Self {
        self.max_cache_entries = Some(limit);
        self
    }
}

#[derive(Clone, Debug)]
pub struct SolverOutcome {
    pub tree: Tree,
    /// Recomputed from `tree` on the solved support.
    pub objective: Objective,
    pub regularizer: Regularizer,
    pub status: SolveStatus,
    pub counters: Counters,
    /// Lower-bound guessing was requested but the reference predicts a
    /// single class.
    pub lb_guess_refused: bool,
    pub elapsed: Duration,
}

impl SolverOutcome {
    pub fn scaled(&self) -> u128 {
        self.objective.scaled(&self.regularizer)
    }

    pub fn value(&self) -> f64 {
        self.objective.value(&self.regularizer)
    }
}

/// A cached subproblem after a run, for inspection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CachedRecord {
    pub support: SupportSet,
    /// `None` when depth is unbounded.
    pub remaining_depth: Option<u32>,
    pub solved: bool,
    /// Scaled objective of the best subtree found.
    pub upper: u128,
    pub upper_leaves: u64,
    pub lower: u128,
    pub best_split: Option<usize>,
}

/// `(s ∩ column j, s \ column j)`.
pub fn split_support(bin: &BinaryDataset, s: &SupportSet, j: usize) -> (SupportSet, SupportSet) {
    let col = bin.column(j);
    (s.intersection(col), s.difference(col))
}

pub fn optimize(bin: &BinaryDataset, cfg: &SolverConfig) -> Result<SolverOutcome, SolverError> {
    run(bin, cfg, &bin.full_support(), false).map(|(o, _)| o)
}

/// As [`optimize`], also returning every cached subproblem.
pub fn optimize_with_records(
    bin: &BinaryDataset,
    cfg: &SolverConfig,
) -> Result<(SolverOutcome, Vec<CachedRecord>), SolverError> {
    run(bin, cfg, &bin.full_support(), true)
}

/// Solves the subproblem on `support` alone; the objective counts only its
/// samples while `N` stays the full sample count.
pub fn optimize_support(
    bin: &BinaryDataset,
    cfg: &SolverConfig,
    support: &SupportSet,
) -> Result<SolverOutcome, SolverError> {
    run(bin, cfg, support, false).map(|(o, _)| o)
}

const UNBOUNDED: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Record {
    lower: u128,
    /// Lower bound derived without the guess.
    sound: u128,
    upper: u128,
    depth: u32,
    split: Option<usize>,
    solved: bool,
    expanded: bool,
}

struct Child {
    s: SupportSet,
    info: NodeInfo,
}

struct Candidate {
    j: usize,
    left: Child,
    right: Child,
}

struct Search<'a> {
    b: Bounds<'a>,
    parallelism: Parallelism,
    unbounded: bool,
    /// One map per remaining depth; a single map when unbounded.
    cache: Vec<FxHashMap<SupportSet, Record>>,
    entries: usize,
    max_entries: Option<usize>,
    counters: Counters,
    guess_bound: bool,
    deadline: Option<Instant>,
    timed_out: bool,
    overflow: bool,
}

fn run(
    bin: &BinaryDataset,
    cfg: &SolverConfig,
    root: &SupportSet,
    want_records: bool,
) -> Result<(SolverOutcome, Vec<CachedRecord>), SolverError> {
    let start = Instant::now();
    let n = bin.n_samples();
    if root.universe() != n {
        return Err(SolverError::SupportLength {
            expected: n,
            found: root.universe(),
        });
    }
    if root.is_empty() {
        return Err(SolverError::EmptySupport);
    }
    let depth = match cfg.depth_limit {
        DepthLimit::Bounded(0) => return Err(SolverError::ZeroDepth),
        DepthLimit::Bounded(d) => d,
        DepthLimit::Unbounded => UNBOUNDED,
    };
    let mut lb_guess_refused = false;
    let reference = match &cfg.lb_guess {
        Some(r) if r.n_samples() != n => {
            return Err(SolverError::ReferenceLength {
                expected: n,
                found: r.n_samples(),
            })
        }
        Some(r) if r.is_single_class() => {
            log::warn!("reference predicts a single class; lower-bound guessing disabled");
            lb_guess_refused = true;
            None
        }
        other => other.as_ref(),
    };
    let eq = cfg.use_equiv_points_bound.then(|| equivalence_classes(bin));
    let reg = Regularizer::new(cfg.lambda, n);
    let b = Bounds {
        bin,
        reg,
        l: leaf_scale(n),
        eq: eq.as_ref(),
        reference,
    };
    let slots = if depth == UNBOUNDED { 1 } else { depth as usize + 1 };
    let mut search = Search {
        b,
        parallelism: cfg.parallelism,
        unbounded: depth == UNBOUNDED,
        cache: (0..slots).map(|_| FxHashMap::default()).collect(),
        entries: 0,
        max_entries: cfg.max_cache_entries,
        counters: Counters::default(),
        guess_bound: false,
        deadline: cfg.time_limit.map(|t| start + t),
        timed_out: false,
        overflow: false,
    };

    let info = search.b.node(root);
    let found = if search.terminal(depth, &info) {
        search.counters.created = 1;
        Some((info.leaf_ext, 0))
    } else {
        search.solve(root, depth, &info, u128::MAX)
    };
    if search.overflow {
        return Err(SolverError::CacheLimit {
            limit: cfg.max_cache_entries.unwrap_or(0),
            counters: search.counters,
        });
    }
    let tree = search.extract(root, depth);
    let objective = support_objective(&tree, bin, root);
    if let Some((ext, _)) = found {
        debug_assert_eq!(ext, search.b.ext(objective.scaled(&reg), objective.leaves));
    }
    let status = if search.timed_out {
        SolveStatus::TimeLimit
    } else if search.guess_bound {
        SolveStatus::GuessCertified
    } else {
        SolveStatus::Optimal
    };
    let records = if want_records { search.records() } else { Vec::new() };
    Ok((
        SolverOutcome {
            tree,
            objective,
            regularizer: reg,
            status,
            counters: search.counters,
            lb_guess_refused,
            elapsed: start.elapsed(),
        },
        records,
    ))
}

fn support_objective(tree: &Tree, bin: &BinaryDataset, s: &SupportSet) -> Objective {
    let positives = bin.positives();
    let mut errors = 0u64;
    tree.route(bin, s.clone(), &mut |pred, cell| {
        let ones = cell.intersection_count(positives);
        errors += if pred == 1 { cell.count() - ones } else { ones } as u64;
    })
    .expect("solver trees use dataset columns");
    Objective {
        errors,
        leaves: tree.leaves() as u64,
    }
}

/// Every split of `s` with two non-empty children; `leaves_only` when the
/// children have no depth left.
fn candidates(b: &Bounds<'_>, parallelism: Parallelism, s: &SupportSet, leaves_only: bool) -> Vec<Candidate> {
    let info = |c: &SupportSet| {
        if leaves_only || c.count() <= 1 {
            b.leaf_node(c)
        } else {
            b.node(c)
        }
    };
    parallelism
        .map_range(b.bin.n_columns(), |j| {
            let (l, r) = split_support(b.bin, s, j);
            if l.is_empty() || r.is_empty() {
                return None;
            }
            Some(Candidate {
                j,
                left: Child { info: info(&l), s: l },
                right: Child { info: info(&r), s: r },
            })
        })
        .into_iter()
        .flatten()
        .collect()
}

impl Search<'_> {
    fn terminal(&self, d: u32, info: &NodeInfo) -> bool {
        d == 0 || info.count <= 1
    }

    fn slot(&self, d: u32) -> usize {
        if self.unbounded {
            0
        } else {
            d as usize
        }
    }

    fn child_depth(&self, d: u32) -> u32 {
        if self.unbounded {
            d
        } else {
            d - 1
        }
    }

    fn halted(&self) -> bool {
        self.timed_out || self.overflow
    }

    fn note_guess(&mut self) {
        self.guess_bound = true;
    }

    /// `(active, sound)` lower bounds of a child subproblem.
    fn child_lb(&self, c: &Child, d: u32) -> (u128, u128) {
        if self.terminal(d, &c.info) {
            return (c.info.leaf_ext, c.info.leaf_ext);
        }
        match self.cache[self.slot(d)].get(&c.s) {
            Some(r) if r.solved => (r.upper, r.sound),
            Some(r) => (r.lower, r.sound),
            None => (c.info.active, c.info.sound),
        }
    }

    fn eval_child(&mut self, c: &Child, d: u32, budget: u128) -> Option<(u128, u32)> {
        self.solve(&c.s, d, &c.info, budget)
    }

    /// Closes `rec` once its incumbent meets the active lower bound or the
    /// guessed objective.
    fn closes(&mut self, rec: &Record, info: &NodeInfo) -> bool {
        let by_guess = rec.upper > rec.sound;
        let met_lower = rec.upper <= rec.lower;
        let met_guess = info.guess_scaled.is_some_and(|g| rec.upper / self.b.l <= g);
        if !(met_lower || met_guess) {
            return false;
        }
        if by_guess {
            self.counters.closed_by_guess += 1;
            self.note_guess();
        }
        true
    }

    fn store(&mut self, d: u32, s: &SupportSet, rec: Record) {
        let slot = self.slot(d);
        self.cache[slot].insert(s.clone(), rec);
    }

    fn solve(&mut self, s: &SupportSet, d: u32, info: &NodeInfo, budget: u128) -> Option<(u128, u32)> {
        if self.terminal(d, info) {
            return Some((info.leaf_ext, 0));
        }
        if self.halted() {
            return None;
        }
        let mut rec = match self.cache[self.slot(d)].get(s) {
            Some(r) => {
                self.counters.cache_hits += 1;
                if r.solved {
                    return Some((r.upper, r.depth));
                }
                if r.lower >= budget {
                    return None;
                }
                r.clone()
            }
            None => {
                if self.max_entries.is_some_and(|m| self.entries >= m) {
                    self.overflow = true;
                    return None;
                }
                self.counters.created += 1;
                self.entries += 1;
                let mut rec = Record {
                    lower: info.active,
                    sound: info.sound,
                    upper: info.leaf_ext,
                    depth: 0,
                    split: None,
                    solved: false,
                    expanded: false,
                };
                if self.closes(&rec, info) {
                    rec.solved = true;
                    rec.lower = rec.upper;
                    let out = (rec.upper, 0);
                    self.store(d, s, rec);
                    return Some(out);
                }
                rec
            }
        };
        if self.deadline.is_some_and(|t| Instant::now() >= t) {
            self.timed_out = true;
            self.store(d, s, rec);
            return None;
        }

        if !rec.expanded {
            rec.expanded = true;
            self.counters.expanded += 1;
        }
        let cd = self.child_depth(d);
        let cands = candidates(&self.b, self.parallelism, s, cd == 0);
        let mut order: Vec<(u128, usize)> = cands
            .iter()
            .enumerate()
            .map(|(i, c)| (self.child_lb(&c.left, cd).1 + self.child_lb(&c.right, cd).1, i))
            .collect();
        order.sort_unstable();

        let mut closed = false;
        for (_, i) in order {
            if self.halted() {
                break;
            }
            let c = &cands[i];
            let (al, sl) = self.child_lb(&c.left, cd);
            let (ar, sr) = self.child_lb(&c.right, cd);
            // an equal-objective candidate has depth >= 1 and a larger column
            // unless it comes before the incumbent split
            let tie_can_win = rec.split.is_some_and(|bj| rec.depth >= 2 || c.j < bj);
            let limit = if tie_can_win { rec.upper + 1 } else { rec.upper }.min(budget);
            if al + ar >= limit {
                if sl + sr < limit {
                    self.note_guess();
                }
                continue;
            }
            let Some((vl, dl)) = self.eval_child(&c.left, cd, limit - ar) else {
                if ar > sr {
                    self.note_guess();
                }
                continue;
            };
            if vl + ar >= limit {
                if vl + sr < limit {
                    self.note_guess();
                }
                continue;
            }
            let Some((vr, dr)) = self.eval_child(&c.right, cd, limit - vl) else {
                continue;
            };
            let ext = vl + vr;
            let depth = 1 + dl.max(dr);
            if ext >= limit || (ext, depth, c.j) >= (rec.upper, rec.depth, rec.split.unwrap_or(usize::MAX)) {
                continue;
            }
            rec.upper = ext;
            rec.depth = depth;
            rec.split = Some(c.j);
            if self.closes(&rec, info) {
                closed = true;
                break;
            }
        }

        let halted = self.halted();
        if closed || (!halted && rec.upper < budget) {
            rec.solved = true;
            rec.lower = rec.upper;
            if !self.guess_bound {
                rec.sound = rec.upper;
            }
            let out = (rec.upper, rec.depth);
            self.store(d, s, rec);
            return Some(out);
        }
        if !halted {
            rec.lower = rec.lower.max(budget);
            if !self.guess_bound {
                rec.sound = rec.sound.max(budget);
            }
        }
        self.store(d, s, rec);
        None
    }

    /// Follows recorded best splits from `s` down.
    fn extract(&self, s: &SupportSet, d: u32) -> Tree {
        let (prediction, _) = leaf_objective(self.b.bin, s);
        if d == 0 || s.count() <= 1 {
            return Tree::leaf(prediction);
        }
        match self.cache[self.slot(d)].get(s).and_then(|r| r.split) {
            Some(j) => {
                let (l, r) = split_support(self.b.bin, s, j);
                let cd = self.child_depth(d);
                let m = self.b.bin.meta()[j];
                Tree::split(m.feature, m.threshold, self.extract(&l, cd), self.extract(&r, cd))
            }
            None => Tree::leaf(prediction),
        }
    }

    fn records(&self) -> Vec<CachedRecord> {
        let mut out = Vec::with_capacity(self.entries);
        for (slot, map) in self.cache.iter().enumerate() {
            for (s, r) in map {
                out.push(CachedRecord {
                    support: s.clone(),
                    remaining_depth: (!self.unbounded).then_some(slot as u32),
                    solved: r.solved,
                    upper: r.upper / self.b.l,
                    upper_leaves: (r.upper % self.b.l) as u64,
                    lower: r.lower / self.b.l,
                    best_split: r.split,
                });
            }
        }
        out.sort_by(|a, b| (a.remaining_depth, &a.support).cmp(&(b.remaining_depth, &b.support)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(columns: Vec<Vec<bool>>, labels: Vec<u8>) -> BinaryDataset {
        let cols = columns.iter().map(|c| SupportSet::from_bools(c)).collect();
        BinaryDataset::from_columns(cols, None, labels, vec![]).unwrap()
    }

    fn xor() -> BinaryDataset {
        bin(
            vec![vec![true, true, false, false], vec![true, false, true, false]],
            vec![0, 1, 1, 0],
        )
    }

    fn lam(s: &str) -> Lambda {
        s.parse().unwrap()
    }

    #[test]
    fn xor_fits_exactly_without_penalty() {
        let out = optimize(&xor(), &SolverConfig::new(lam("0"), DepthLimit::Bounded(2))).unwrap();
        assert_eq!(out.objective, Objective { errors: 0, leaves: 4 });
        assert_eq!(out.status, SolveStatus::Optimal);
    }

    #[test]
    fn xor_heavy_penalty_gives_leaf() {
        let out = optimize(&xor(), &SolverConfig::new(lam("0.3"), DepthLimit::Bounded(2))).unwrap();
        assert!(out.tree.is_leaf());
        assert!((out.value() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn forced_leaf_counters() {
        let b = bin(vec![vec![true, false]], vec![1, 1]);
        let out = optimize(&b, &SolverConfig::new(lam("0.01"), DepthLimit::Bounded(3))).unwrap();
        assert_eq!(out.counters.created, 1);
        assert_eq!(out.counters.expanded, 0);
        assert!(out.tree.is_leaf());
    }

    #[test]
    fn label_copy_column() {
        let b = bin(
            vec![vec![false, true, false, true], vec![true, true, false, false]],
            vec![0, 1, 0, 1],
        );
        let out = optimize(&b, &SolverConfig::new(lam("0.01"), DepthLimit::Bounded(3))).unwrap();
        assert_eq!(out.objective, Objective { errors: 0, leaves: 2 });
        match out.tree {
            Tree::Split { feature, .. } => assert_eq!(feature, 0),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn split_partition() {
        let b = xor();
        let s = b.full_support();
        let (l, r) = split_support(&b, &s, 0);
        assert_eq!(l.count() + r.count(), 4);
        assert_eq!(l.intersection_count(&r), 0);
        assert_eq!(l.union(&r), s);
        let ones = bin(vec![vec![true; 4]], vec![0, 1, 0, 1]);
        let (l, r) = split_support(&ones, &ones.full_support(), 0);
        assert_eq!((l.count(), r.count()), (4, 0));
    }

    #[test]
    fn cache_limit_is_reported() {
        let cfg = SolverConfig::new(lam("0"), DepthLimit::Bounded(2)).with_max_cache_entries(1);
        let err = optimize(&xor(), &cfg).unwrap_err();
        assert!(matches!(err, SolverError::CacheLimit { limit: 1, .. }));
    }

    #[test]
    fn single_class_reference_is_refused() {
        let b = xor();
        let r = ReferenceLabels::from_predictions(vec![0; 4], b.labels()).unwrap();
        let cfg = SolverConfig::new(lam("0"), DepthLimit::Bounded(2)).with_lb_guess(r);
        let out = optimize(&b, &cfg).unwrap();
        assert!(out.lb_guess_refused);
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.objective.errors, 0);
    }

    #[test]
    fn depth_limit_parsing() {
        assert_eq!("none".parse::<DepthLimit>().unwrap(), DepthLimit::Unbounded);
        assert_eq!("3".parse::<DepthLimit>().unwrap(), DepthLimit::Bounded(3));
        assert!("0".parse::<DepthLimit>().is_err());
        assert!(optimize(&xor(), &SolverConfig::new(lam("0"), DepthLimit::Bounded(0))).is_err());
    }

    #[test]
    fn zero_time_limit_returns_incumbent() {
        let cfg = SolverConfig::new(lam("0"), DepthLimit::Bounded(2)).with_time_limit(Duration::ZERO);
        let out = optimize(&xor(), &cfg).unwrap();
        assert_eq!(out.status, SolveStatus::TimeLimit);
        assert!(out.tree.is_leaf());
        assert_eq!(out.objective.errors, 2);
    }
}
