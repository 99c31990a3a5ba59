#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treeguess::dataset::{load_csv, BinaryDataset, RawDataset};
use treeguess::objective::Lambda;
use treeguess::support::SupportSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn compas() -> RawDataset {
    load_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/compas.csv")).expect("compas fixture")
}

/// `n` rows sampled without replacement.
pub fn subsample(raw: &RawDataset, n: usize, seed: u64) -> RawDataset {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..raw.n_samples()).collect();
    idx.shuffle(&mut rng(seed));
    idx.truncate(n);
    idx.sort_unstable();
    raw.select(&idx).unwrap()
}

pub fn lambdas() -> [Lambda; 3] {
    [Lambda::zero(), Lambda::new(1, 64), Lambda::new(1, 20)]
}

pub fn binary_from_columns(columns: Vec<Vec<bool>>, labels: Vec<u8>) -> BinaryDataset {
    let cols = columns.iter().map(|c| SupportSet::from_bools(c)).collect();
    let names = (0..columns.len()).map(|j| format!("b{j}")).collect();
    BinaryDataset::from_columns(cols, None, labels, names).unwrap()
}

/// Random bit columns; labels follow a random depth-2 rule over them with
/// `noise` flip probability.
pub fn random_binary(r: &mut impl Rng, n: usize, m: usize, noise: f64) -> BinaryDataset {
    let density: Vec<f64> = (0..m).map(|_| r.random_range(0.2..0.8)).collect();
    let columns: Vec<Vec<bool>> = (0..m)
        .map(|j| (0..n).map(|_| r.random_bool(density[j])).collect())
        .collect();
    let (a, b, c) = (r.random_range(0..m), r.random_range(0..m), r.random_range(0..m));
    let labels = (0..n)
        .map(|i| {
            let y = if columns[a][i] { columns[b][i] } else { !columns[c][i] };
            u8::from(y ^ r.random_bool(noise))
        })
        .collect();
    binary_from_columns(columns, labels)
}

/// Integer-valued raw features in `0..levels`; labels from a threshold rule
/// on the first two features, flipped with probability `noise`.
pub fn random_raw(r: &mut impl Rng, n: usize, features: usize, levels: u32, noise: f64) -> RawDataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..features).map(|_| r.random_range(0..levels) as f64).collect())
        .collect();
    let t0 = r.random_range(0..levels) as f64;
    let t1 = r.random_range(0..levels) as f64;
    let labels = rows
        .iter()
        .map(|x| {
            let y = (x[0] <= t0) ^ (x[features.min(2) - 1] > t1);
            u8::from(y ^ r.random_bool(noise))
        })
        .collect();
    let names = (0..features).map(|j| format!("x{j}")).collect();
    RawDataset::new(rows, names, labels).unwrap()
}
