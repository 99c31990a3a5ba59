mod common;

use std::time::Duration;

use rand::Rng;
use treeguess::dataset::full_binarize;
use treeguess::eval::{brute_force_optimal, enumerate_trees};
use treeguess::objective::{Lambda, Regularizer};
use treeguess::solver::{optimize, optimize_support, optimize_with_records, split_support, RunReport};
use treeguess::{DepthLimit, Parallelism, ReferenceLabels, SolveStatus, SolverConfig, SupportSet};

#[test]
fn reported_objective_matches_rescoring() {
    for seed in 0..60 {
        let mut r = common::rng(seed);
        let (n, m) = (r.random_range(2..=64), r.random_range(1..=8));
        let bin = common::random_binary(&mut r, n, m, 0.2);
        let lambda = common::lambdas()[seed as usize % 3];
        let mut cfg = SolverConfig::new(lambda, DepthLimit::Bounded(1 + seed as u32 % 3));
        if seed % 2 == 1 {
            let pred = bin.labels().iter().map(|&y| y ^ u8::from(r.random_bool(0.2))).collect();
            cfg = cfg.with_lb_guess(ReferenceLabels::from_predictions(pred, bin.labels()).unwrap());
        }
        let out = optimize(&bin, &cfg).unwrap();
        let rescored = out.tree.objective(&bin).unwrap();
        assert_eq!(rescored, out.objective, "seed {seed}");
        assert_eq!(out.tree.scaled_objective(&bin, &out.regularizer).unwrap(), out.scaled());
        assert!(out.tree.depth() <= 1 + seed as usize % 3);
    }
}

#[test]
fn lambda_heavy_xor_is_a_leaf() {
    let xor = common::binary_from_columns(
        vec![vec![true, true, false, false], vec![true, false, true, false]],
        vec![0, 1, 1, 0],
    );
    let lambda: Lambda = "0.3".parse().unwrap();
    let reg = Regularizer::new(lambda, 4);
    let out = optimize(&xor, &SolverConfig::new(lambda, DepthLimit::Bounded(2))).unwrap();
    assert!(out.tree.is_leaf());
    // every depth-1 tree costs 1.1 and the exact fit 1.2
    let best_split = enumerate_trees(&xor, 2)
        .unwrap()
        .into_iter()
        .filter(|t| !t.is_leaf())
        .map(|t| t.objective(&xor).unwrap().scaled(&reg))
        .min()
        .unwrap();
    assert_eq!(best_split, reg.scaled(2, 2));
    assert!(out.scaled() < best_split);
    assert_eq!(out.scaled(), reg.scaled(2, 1));
}

#[test]
fn cached_solutions_resolve_identically() {
    for seed in 0..25 {
        let mut r = common::rng(100 + seed);
        let (n, m) = (r.random_range(8..=48), r.random_range(2..=6));
        let bin = common::random_binary(&mut r, n, m, 0.2);
        let lambda = common::lambdas()[seed as usize % 3];
        let cfg = SolverConfig::new(lambda, DepthLimit::Bounded(3));
        let (_, records) = optimize_with_records(&bin, &cfg).unwrap();
        for rec in records.iter().filter(|r| r.solved) {
            assert_eq!(rec.lower, rec.upper);
            let d = rec.remaining_depth.unwrap();
            let sub = SolverConfig::new(lambda, DepthLimit::Bounded(d));
            let again = optimize_support(&bin, &sub, &rec.support).unwrap();
            assert_eq!(
                (again.scaled(), again.objective.leaves),
                (rec.upper, rec.upper_leaves),
                "seed {seed} support {:?} depth {d}",
                rec.support
            );
        }
    }
}

#[test]
fn unbounded_keys_agree_with_depth_keys() {
    let mut checked = 0;
    for seed in 0..60 {
        let mut r = common::rng(200 + seed);
        let (n, m) = (r.random_range(8..=40), r.random_range(2..=5));
        let bin = common::random_binary(&mut r, n, m, 0.1);
        let lambda = Lambda::new(1, 20 + seed % 3 * 20);
        let free = optimize(&bin, &SolverConfig::new(lambda, DepthLimit::Unbounded)).unwrap();
        let limit = free.tree.depth().max(1) as u32;
        for d in limit..=limit + 1 {
            let bounded = optimize(&bin, &SolverConfig::new(lambda, DepthLimit::Bounded(d))).unwrap();
            assert_eq!(bounded.scaled(), free.scaled(), "seed {seed} depth {d}");
            checked += 1;
        }
    }
    assert_eq!(checked, 120);
}

#[test]
fn parallel_mode_matches_sequential() {
    let raw = common::subsample(&common::compas(), 600, 1);
    let bin = full_binarize(&raw);
    for depth in [2, 3] {
        let seq = SolverConfig::new("0.005".parse().unwrap(), DepthLimit::Bounded(depth));
        let par = seq.clone().with_parallelism(Parallelism::Parallel);
        let a = optimize(&bin, &seq).unwrap();
        let b = optimize(&bin, &par).unwrap();
        assert_eq!(a.tree, b.tree);
        assert_eq!(a.counters, b.counters);
        assert_eq!(
            RunReport::new(&a, &bin, &seq, false).to_json_string(),
            RunReport::new(&b, &bin, &seq, false).to_json_string()
        );
    }
}

#[test]
fn reruns_give_identical_counters() {
    let mut r = common::rng(7);
    let bin = common::random_binary(&mut r, 64, 8, 0.2);
    let cfg = SolverConfig::new(Lambda::new(1, 64), DepthLimit::Bounded(3));
    let a = optimize(&bin, &cfg).unwrap();
    let b = optimize(&bin, &cfg).unwrap();
    assert_eq!(a.counters, b.counters);
    assert_eq!(a.tree, b.tree);
}

// A guessed closure may accept a subtree worse than its optimum, which can
// weaken pruning higher up, so single instances are allowed to regress.
#[test]
fn lb_guess_expands_less_overall() {
    let (mut total, mut worse) = ((0, 0), 0);
    let runs = 100;
    for seed in 0..runs {
        let mut r = common::rng(300 + seed);
        let bin = common::random_binary(&mut r, 64, 8, 0.15);
        let cfg = SolverConfig::new(Lambda::new(1, 64), DepthLimit::Bounded(3));
        let pred = bin.labels().iter().map(|&y| y ^ u8::from(r.random_bool(0.1))).collect();
        let reference = ReferenceLabels::from_predictions(pred, bin.labels()).unwrap();
        let plain = optimize(&bin, &cfg).unwrap();
        let guessed = optimize(&bin, &cfg.clone().with_lb_guess(reference)).unwrap();
        worse += usize::from(guessed.counters.expanded > plain.counters.expanded);
        total.0 += guessed.counters.expanded;
        total.1 += plain.counters.expanded;
    }
    assert!(total.0 < total.1, "{total:?}");
    assert!(worse * 10 <= runs as usize, "{worse} of {runs} regressed");
}

#[test]
fn no_guess_runs_are_optimal_and_match_brute_force() {
    for seed in 0..30 {
        let mut r = common::rng(400 + seed);
        let (n, m) = (r.random_range(1..=30), r.random_range(1..=6));
        let bin = common::random_binary(&mut r, n, m, 0.3);
        let lambda = common::lambdas()[seed as usize % 3];
        let reg = Regularizer::new(lambda, bin.n_samples());
        let out = optimize(&bin, &SolverConfig::new(lambda, DepthLimit::Bounded(2))).unwrap();
        let (tree, obj) = brute_force_optimal(&bin, &reg, 2).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.scaled(), obj.scaled(&reg));
        // both follow the same tie policy
        assert_eq!(out.tree, tree, "seed {seed}");
    }
}

#[test]
fn equiv_points_bound_does_not_change_results() {
    for seed in 0..30 {
        let mut r = common::rng(500 + seed);
        let bin = common::random_binary(&mut r, 48, 4, 0.3);
        let on = SolverConfig::new(Lambda::new(1, 64), DepthLimit::Bounded(3));
        let off = on.clone().with_equiv_points_bound(false);
        let a = optimize(&bin, &on).unwrap();
        let b = optimize(&bin, &off).unwrap();
        assert_eq!(a.tree, b.tree);
        assert!(a.counters.expanded <= b.counters.expanded);
    }
}

#[test]
fn time_limit_returns_a_scored_incumbent() {
    let bin = full_binarize(&common::compas());
    let cfg = SolverConfig::new("0.0001".parse().unwrap(), DepthLimit::Bounded(4))
        .with_time_limit(Duration::from_millis(200));
    let out = optimize(&bin, &cfg).unwrap();
    assert_eq!(out.status, SolveStatus::TimeLimit);
    assert_eq!(out.tree.objective(&bin).unwrap(), out.objective);
    assert!(out.elapsed < Duration::from_secs(20));
}

#[test]
fn support_partition_on_random_columns() {
    let mut r = common::rng(9);
    let bin = common::random_binary(&mut r, 100, 6, 0.1);
    for _ in 0..50 {
        let s = SupportSet::from_indices(100, (0..100).filter(|_| r.random_bool(0.6)));
        for j in 0..bin.n_columns() {
            let (a, b) = split_support(&bin, &s, j);
            assert_eq!(a.count() + b.count(), s.count());
            assert_eq!(a.intersection_count(&b), 0);
            assert_eq!(a.union(&b), s);
        }
    }
}
