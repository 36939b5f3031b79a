use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MIN_SPLIT_ROWS: usize = 5;

pub fn test_size(n: usize, ratio: f64) -> usize {
    ((1.0 - ratio) * n as f64).round() as usize
}

/// Seeded shuffle of `0..n`, returned as (train, test) index lists, each
/// in ascending order.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("train ratio must be in (0, 1), got {ratio}")));
    }
    if n < MIN_SPLIT_ROWS {
        return Err(Error::invalid(format!(
            "need at least {MIN_SPLIT_ROWS} rows to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = test_size(n, ratio);
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn train_test_split<T: Clone>(rows: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (train, test) = split_indices(rows.len(), ratio, seed)?;
    Ok((
        train.iter().map(|&i| rows[i].clone()).collect(),
        test.iter().map(|&i| rows[i].clone()).collect(),
    ))
}
