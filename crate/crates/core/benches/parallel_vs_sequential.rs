use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use treeguess::dataset::{full_binarize, load_csv};
use treeguess::ensemble::fit_with;
use treeguess::guess::{column_eliminate, EliminationParams};
use treeguess::solver::optimize;
use treeguess::{BoostingParams, DepthLimit, Parallelism, RawDataset, SolverConfig};

const MODES: [Parallelism; 2] = [Parallelism::Sequential, Parallelism::Parallel];

fn compas(rows: usize) -> RawDataset {
    let raw = load_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/compas.csv")).unwrap();
    let idx: Vec<usize> = (0..rows.min(raw.n_samples())).collect();
    raw.select(&idx).unwrap()
}

fn solver(c: &mut Criterion) {
    let bin = full_binarize(&compas(1000));
    let mut g = c.benchmark_group("solver_depth3");
    g.sample_size(10);
    for mode in MODES {
        let cfg = SolverConfig::new("0.01".parse().unwrap(), DepthLimit::Bounded(3)).with_parallelism(mode);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &cfg, |b, cfg| {
            b.iter(|| black_box(optimize(&bin, cfg).unwrap().counters))
        });
    }
    g.finish();
}

fn boosting(c: &mut Criterion) {
    let raw = compas(7000);
    let mut g = c.benchmark_group("gbdt_fit_20x3");
    g.sample_size(10);
    for mode in MODES {
        g.bench_function(BenchmarkId::from_parameter(format!("{mode:?}")), |b| {
            b.iter(|| black_box(fit_with(&raw, BoostingParams::new(20, 3), mode).unwrap()))
        });
    }
    g.finish();
}

fn elimination(c: &mut Criterion) {
    let raw = compas(2000);
    let mut g = c.benchmark_group("column_eliminate_10x2");
    g.sample_size(10);
    for mode in MODES {
        let mut p = EliminationParams::new(BoostingParams::new(10, 2));
        p.parallelism = mode;
        g.bench_function(BenchmarkId::from_parameter(format!("{mode:?}")), |b| {
            b.iter(|| black_box(column_eliminate(&raw, p).unwrap().final_thresholds.len()))
        });
    }
    g.finish();
}

criterion_group!(benches, solver, boosting, elimination);
criterion_main!(benches);
