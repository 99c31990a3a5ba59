//! Verification oracles and the cross-validation benchmark.

mod benchmark;

pub use benchmark::{
    quantile, run_benchmark, BaselineRun, BenchmarkConfig, BenchmarkReport, FoldReport, FoldResult, Quartiles, Summary,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{BinaryDataset, DatasetError, EquivalenceClasses};
use crate::ensemble::{BoostedEnsemble, EnsembleError};
use crate::guess::GuessError;
use crate::objective::{Objective, Regularizer};
use crate::solver::{leaf_objective, split_support, SolverError};
use crate::support::SupportSet;
use crate::tree::{Tree, TreeError};

pub const BRUTE_FORCE_MAX_COLUMNS: usize = 10;
pub const BRUTE_FORCE_MAX_DEPTH: u32 = 3;
pub const REPLICATE_MAX_COLUMNS: usize = 20;
/// Upper limit on the number of trees [`enumerate_trees`] will list.
pub const ENUMERATE_MAX_TREES: u128 = 2_000_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what} is {value}, above the limit of {limit}")]
    Guard {
        what: &'static str,
        value: u128,
        limit: u128,
    },
    #[error("cannot split {n} samples into {k} folds")]
    Folds { k: usize, n: usize },
    #[error("replicating tree disagrees with the ensemble on row {row}")]
    Replication { row: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Guess(#[from] GuessError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn guard(what: &'static str, value: u128, limit: u128) -> Result<(), EvalError> {
    if value > limit {
        return Err(EvalError::Guard { what, value, limit });
    }
    Ok(())
}

fn leaf_tree(bin: &BinaryDataset, s: &SupportSet) -> Tree {
    Tree::leaf(if s.is_empty() { 0 } else { leaf_objective(bin, s).0 })
}

fn column_split(bin: &BinaryDataset, j: usize, t: Tree, f: Tree) -> Tree {
    let m = bin.meta()[j];
    Tree::split(m.feature, m.threshold, t, f)
}

/// Exhaustive minimum of the objective over all trees of depth at most
/// `depth`, under the solver's tie policy. No memoization.
pub fn brute_force_optimal(bin: &BinaryDataset, reg: &Regularizer, depth: u32) -> Result<(Tree, Objective), EvalError> {
    guard("column count", bin.n_columns() as u128, BRUTE_FORCE_MAX_COLUMNS as u128)?;
    guard("depth limit", depth as u128, BRUTE_FORCE_MAX_DEPTH as u128)?;
    let l = bin.n_samples() as u128 + 1;
    let s = bin.full_support();
    if s.is_empty() {
        return Err(SolverError::EmptySupport.into());
    }
    let (_, _, tree) = brute(bin, reg, l, &s, depth);
    let objective = tree.objective(bin)?;
    Ok((tree, objective))
}

/// `(extended objective, depth, tree)`; the extended objective is
/// `scaled * L + leaves`.
fn brute(bin: &BinaryDataset, reg: &Regularizer, l: u128, s: &SupportSet, d: u32) -> (u128, u32, Tree) {
    let (pred, leaf) = leaf_objective(bin, s);
    let mut best = (leaf.scaled(reg) * l + 1, 0u32, usize::MAX);
    let mut best_tree = Tree::leaf(pred);
    if d == 0 {
        return (best.0, best.1, best_tree);
    }
    for j in 0..bin.n_columns() {
        let (a, b) = split_support(bin, s, j);
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let (ea, da, ta) = brute(bin, reg, l, &a, d - 1);
        let (eb, db, tb) = brute(bin, reg, l, &b, d - 1);
        let key = (ea + eb, 1 + da.max(db), j);
        if key < best {
            best = key;
            best_tree = column_split(bin, j, ta, tb);
        }
    }
    (best.0, best.1, best_tree)
}

fn count_trees(m: u128, depth: u32) -> u128 {
    let mut n: u128 = 2;
    for _ in 0..depth {
        n = n.saturating_mul(n).saturating_mul(m).saturating_add(2);
    }
    n
}

/// Every tree of depth at most `depth` over the columns of `bin`, with every
/// labelling of its leaves.
pub fn enumerate_trees(bin: &BinaryDataset, depth: u32) -> Result<Vec<Tree>, EvalError> {
    guard(
        "tree count",
        count_trees(bin.n_columns() as u128, depth),
        ENUMERATE_MAX_TREES,
    )?;
    fn go(bin: &BinaryDataset, d: u32) -> Vec<Tree> {
        let mut out = vec![Tree::leaf(0), Tree::leaf(1)];
        if d == 0 {
            return out;
        }
        let sub = go(bin, d - 1);
        for j in 0..bin.n_columns() {
            for t in &sub {
                for f in &sub {
                    out.push(column_split(bin, j, t.clone(), f.clone()));
                }
            }
        }
        out
    }
    Ok(go(bin, depth))
}

/// `min_t q * errors_on(counted, t) + p * N * H_t` over trees of depth at most
/// `depth`; samples outside `counted` carry no loss.
pub fn min_counted_objective(bin: &BinaryDataset, counted: &SupportSet, reg: &Regularizer, depth: u32) -> u128 {
    fn go(bin: &BinaryDataset, counted: &SupportSet, reg: &Regularizer, s: &SupportSet, d: u32) -> u128 {
        let live = s.intersection(counted);
        let ones = live.intersection_count(bin.positives());
        let leaf = reg.scaled(ones.min(live.count() - ones) as u64, 1);
        if d == 0 || live.is_empty() {
            return leaf;
        }
        let mut best = leaf;
        for j in 0..bin.n_columns() {
            let (a, b) = split_support(bin, s, j);
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let v = go(bin, counted, reg, &a, d - 1) + go(bin, counted, reg, &b, d - 1);
            best = best.min(v);
        }
        best
    }
    go(bin, counted, reg, &bin.full_support(), depth)
}

/// A single tree reproducing `ens` on every row of `reduced`.
///
/// `ens` must take the indicator columns of `reduced` as its features. The
/// feasible cells of the threshold grid (one interval per feature) are
/// labelled by the ensemble, then split recursively until each side predicts
/// one class. A node splits on the first column leaving both sides pure, else
/// one side pure, else on the first column that separates its cells.
pub fn replicating_tree(ens: &BoostedEnsemble, reduced: &BinaryDataset) -> Result<Tree, EvalError> {
    if let Some(c) = ens.constant_class {
        return Ok(Tree::leaf(c));
    }
    let m = reduced.n_columns();
    guard("reduced column count", m as u128, REPLICATE_MAX_COLUMNS as u128)?;
    let meta = reduced.meta();

    // columns of each feature by ascending threshold; interval `l` of a
    // feature sets its columns of rank >= l
    let mut by_feature: Vec<Vec<usize>> = Vec::new();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        crate::dataset::cmp_split(
            (meta[a].feature, meta[a].threshold),
            (meta[b].feature, meta[b].threshold),
        )
    });
    for c in order {
        match by_feature.last_mut() {
            Some(g) if meta[g[0]].feature == meta[c].feature => g.push(c),
            _ => by_feature.push(vec![c]),
        }
    }
    let mut cells: Vec<Vec<bool>> = vec![vec![false; m]];
    for g in &by_feature {
        let mut next = Vec::with_capacity(cells.len() * (g.len() + 1));
        for cell in &cells {
            for l in 0..=g.len() {
                let mut c = cell.clone();
                for (rank, &col) in g.iter().enumerate() {
                    c[col] = rank >= l;
                }
                next.push(c);
            }
        }
        cells = next;
    }
    let rows: Vec<Vec<f64>> = cells
        .iter()
        .map(|c| c.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .collect();
    let pred = ens.predict_rows(rows.iter().map(Vec::as_slice))?;

    fn grow(idx: &[usize], cells: &[Vec<bool>], pred: &[u8], meta: &[crate::dataset::ColumnMeta]) -> Tree {
        let first = pred[idx[0]];
        if idx.iter().all(|&i| pred[i] == first) {
            return Tree::leaf(first);
        }
        let parts = |c: usize| -> (Vec<usize>, Vec<usize>) { idx.iter().partition(|&&i| cells[i][c]) };
        let pure = |side: &[usize]| side.iter().all(|&i| pred[i] == pred[side[0]]);
        // prefer both sides pure, then one side, then any separating column
        let mut best: Option<(u8, usize, Vec<usize>, Vec<usize>)> = None;
        for c in 0..meta.len() {
            let (t, f) = parts(c);
            if t.is_empty() || f.is_empty() {
                continue;
            }
            let rank = 2 - u8::from(pure(&t)) - u8::from(pure(&f));
            if best.as_ref().is_none_or(|b| rank < b.0) {
                best = Some((rank, c, t, f));
                if rank == 0 {
                    break;
                }
            }
        }
        // distinct cells with different labels always differ in some column
        let (_, c, t, f) = best.expect("separating column");
        let (lt, lf) = (grow(&t, cells, pred, meta), grow(&f, cells, pred, meta));
        if lt == lf {
            lt
        } else {
            Tree::split(meta[c].feature, meta[c].threshold, lt, lf)
        }
    }

    let all: Vec<usize> = (0..cells.len()).collect();
    let tree = grow(&all, &cells, &pred, meta);
    let want = ens.predict_binary(reduced)?;
    let got = tree.predict(reduced)?;
    if let Some(row) = (0..want.len()).find(|&i| want[i] != got[i]) {
        return Err(EvalError::Replication { row });
    }
    Ok(tree)
}

/// Replaces every internal node at depth `d` by a leaf predicting the
/// majority of its captured training samples (ties and empty nodes to 0).
pub fn prune_to_depth(t: &Tree, d: usize, bin: &BinaryDataset) -> Result<Tree, EvalError> {
    fn go(t: &Tree, level: usize, d: usize, bin: &BinaryDataset, s: SupportSet) -> Result<Tree, EvalError> {
        match t {
            Tree::Leaf { .. } => Ok(t.clone()),
            Tree::Split { .. } if level >= d => Ok(leaf_tree(bin, &s)),
            Tree::Split {
                feature,
                threshold,
                if_true,
                if_false,
            } => {
                let j = bin.column_for(*feature, *threshold).ok_or(TreeError::UnknownColumn {
                    feature: *feature,
                    threshold: *threshold,
                })?;
                let col = bin.column(j);
                Ok(Tree::split(
                    *feature,
                    *threshold,
                    go(if_true, level + 1, d, bin, s.intersection(col))?,
                    go(if_false, level + 1, d, bin, s.difference(col))?,
                ))
            }
        }
    }
    go(t, 0, d, bin, bin.full_support())
}

/// Scaled (`N * q`) form of the gap bound between the depth-`d_guess`
/// optimum and `t_star`:
/// `q * (errors(t') - minority_total) - p * N * (H_{t*} - H_{t'})`, with `t'`
/// the pruning of `t_star` to `d_guess`.
pub fn depth_gap_bound(
    t_star: &Tree,
    d_guess: usize,
    bin: &BinaryDataset,
    eq: &EquivalenceClasses,
    reg: &Regularizer,
) -> Result<i128, EvalError> {
    let pruned = prune_to_depth(t_star, d_guess, bin)?;
    let errors = pruned.objective(bin)?.errors as i128;
    let minority = eq.total_minority() as i128;
    let leaves_gap = t_star.leaves() as i128 - pruned.leaves() as i128;
    Ok(reg.error_weight() as i128 * (errors - minority) - reg.leaf_weight() as i128 * leaves_gap)
}

/// Seeded k-fold partition of `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Test indices of each fold, ascending.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn test(&self, i: usize) -> &[usize] {
        &self.folds[i]
    }

    /// Every index outside fold `i`, ascending.
    pub fn train(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != i)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Shuffles `0..n` with a seeded ChaCha8 generator and deals the result
/// round-robin into `k` folds.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 || k > n {
        return Err(EvalError::Folds { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (p, i) in order.into_iter().enumerate() {
        folds[p % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { k, seed, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::Lambda;

    fn bin(columns: Vec<Vec<bool>>, labels: Vec<u8>) -> BinaryDataset {
        let cols = columns.iter().map(|c| SupportSet::from_bools(c)).collect();
        BinaryDataset::from_columns(cols, None, labels, vec![]).unwrap()
    }

    #[test]
    fn brute_force_examples() {
        let xor = bin(
            vec![vec![true, true, false, false], vec![true, false, true, false]],
            vec![0, 1, 1, 0],
        );
        let reg = Regularizer::new(Lambda::zero(), 4);
        let (_, obj) = brute_force_optimal(&xor, &reg, 2).unwrap();
        assert_eq!(obj.errors, 0);

        let copy = bin(vec![vec![true, false, true, false]], vec![0, 1, 0, 1]);
        let reg = Regularizer::new(Lambda::new(1, 100), 4);
        let (t, obj) = brute_force_optimal(&copy, &reg, 3).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(obj, Objective { errors: 0, leaves: 2 });
    }

    #[test]
    fn brute_force_guards() {
        let wide = bin(vec![vec![true, false]; 11], vec![0, 1]);
        let reg = Regularizer::new(Lambda::zero(), 2);
        assert!(matches!(
            brute_force_optimal(&wide, &reg, 2),
            Err(EvalError::Guard { .. })
        ));
        let narrow = bin(vec![vec![true, false]], vec![0, 1]);
        assert!(matches!(
            brute_force_optimal(&narrow, &reg, 4),
            Err(EvalError::Guard { .. })
        ));
    }

    #[test]
    fn enumeration_counts() {
        let b = bin(vec![vec![true, false], vec![false, true]], vec![0, 1]);
        assert_eq!(enumerate_trees(&b, 0).unwrap().len(), 2);
        assert_eq!(enumerate_trees(&b, 1).unwrap().len(), 2 + 2 * 4);
        assert_eq!(count_trees(2, 2), 2 + 2 * 100);
    }

    #[test]
    fn prune_examples() {
        let b = bin(
            vec![vec![true, true, false, false], vec![true, false, true, false]],
            vec![0, 1, 1, 1],
        );
        let t = Tree::split(0, 0.5, Tree::split(1, 0.5, Tree::leaf(0), Tree::leaf(1)), Tree::leaf(1));
        assert_eq!(prune_to_depth(&t, 5, &b).unwrap(), t);
        assert_eq!(prune_to_depth(&t, 0, &b).unwrap(), Tree::leaf(1));
        // left node holds labels {0, 1}: tie goes to 0
        let one = prune_to_depth(&t, 1, &b).unwrap();
        assert_eq!(one, Tree::split(0, 0.5, Tree::leaf(0), Tree::leaf(1)));
    }

    #[test]
    fn kfold_partitions() {
        let p = kfold(10, 5, 7).unwrap();
        assert!(p.folds.iter().all(|f| f.len() == 2));
        let mut all: Vec<usize> = p.folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(p, kfold(10, 5, 7).unwrap());
        assert_eq!(p.train(0).len(), 8);
        assert!(kfold(3, 4, 0).is_err());
        assert!(kfold(3, 1, 0).is_err());
    }

    #[test]
    fn min_counted_ignores_uncounted() {
        let b = bin(vec![vec![true, false, true, false]], vec![0, 1, 1, 0]);
        let reg = Regularizer::new(Lambda::zero(), 4);
        let counted = SupportSet::from_indices(4, [0, 1]);
        assert_eq!(min_counted_objective(&b, &counted, &reg, 1), 0);
        assert_eq!(min_counted_objective(&b, &b.full_support(), &reg, 0), reg.scaled(2, 1));
    }
}
