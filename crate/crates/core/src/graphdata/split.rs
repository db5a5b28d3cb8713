use rand::seq::SliceRandom;

use super::dataset::MultilabelDataset;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Partition sizes for `n` items: `floor(n·r)` for valid and test, the
/// remainder to train.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|&r| r < 0.0 || !r.is_finite()) {
        return Err(Error::Domain(format!("split ratios must be non-negative, got {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("split ratios sum to {total}, expected 1")));
    }
    let valid = (n as f64 * ratios[1]).floor() as usize;
    let test = (n as f64 * ratios[2]).floor() as usize;
    Ok([n - valid - test, valid, test])
}

/// Seeded shuffle of example indices, cut into train/valid/test.
pub fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> Result<[Vec<usize>; 3]> {
    let [train, valid, _] = split_sizes(n, ratios)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, Stream::Split));
    let test = idx.split_off(train + valid);
    let valid = idx.split_off(train);
    Ok([idx, valid, test])
}

pub fn split(
    dataset: &MultilabelDataset,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(MultilabelDataset, MultilabelDataset, MultilabelDataset)> {
    let [a, b, c] = split_indices(dataset.len(), ratios, seed)?;
    let pick = |idx: Vec<usize>| {
        dataset.with_examples(idx.into_iter().map(|i| dataset.examples[i].clone()).collect())
    };
    Ok((pick(a), pick(b), pick(c)))
}
