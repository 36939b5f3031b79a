use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::mean_squared_error;
use super::Regressor;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_REPEATS: usize = 20;

/// Accuracy of predictions: R², or negative MSE when the targets have no
/// variance. Higher is better either way.
fn score(y: &[f64], pred: &[f64], sst: f64) -> f64 {
    let mse = mean_squared_error(y, pred);
    if sst > 0.0 {
        1.0 - mse * y.len() as f64 / sst
    } else {
        -mse
    }
}

/// Mean drop in R² when each column is shuffled, sorted by descending
/// score; ties keep column order.
pub fn permutation_importance(
    model: &dyn Regressor,
    x: &Matrix,
    y: &[f64],
    columns: &[String],
    repeats: usize,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    if repeats == 0 {
        return Err(Error::invalid("permutation importance needs at least one repeat"));
    }
    if columns.len() != x.ncols() || y.len() != x.nrows() {
        return Err(Error::invalid("importance inputs have mismatched shapes"));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let base = score(y, &model.predict(x), sst);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(x.ncols());
    let mut shuffled = x.clone();
    for j in 0..x.ncols() {
        let original = x.column(j);
        let mut total = 0.0;
        for _ in 0..repeats {
            let mut perm = original.clone();
            perm.shuffle(&mut rng);
            shuffled.set_column(j, &perm);
            total += base - score(y, &model.predict(&shuffled), sst);
        }
        shuffled.set_column(j, &original);
        scores.push((columns[j].clone(), total / repeats as f64));
    }
    scores.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::gbt::{gbt_fit, GbtParams};
    use rand::Rng;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn single_signal_column_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = Matrix::zeros(120, 5);
        for i in 0..120 {
            for j in 0..5 {
                x[(i, j)] = rng.random_range(0.0..1.0);
            }
        }
        let y: Vec<f64> = (0..120).map(|i| 10.0 * x[(i, 3)]).collect();
        let model = gbt_fit(&x, &y, GbtParams::default()).unwrap();
        let imp = permutation_importance(&model, &x, &y, &names(5), DEFAULT_REPEATS, 1).unwrap();
        assert_eq!(imp[0].0, "x3");
        let mut used = Vec::new();
        for t in &model.trees {
            t.collect_features(&mut used);
        }
        for (name, s) in &imp {
            let j: usize = name[1..].parse().unwrap();
            if !used.contains(&j) {
                assert_eq!(*s, 0.0);
            }
        }
        assert_eq!(
            permutation_importance(&model, &x, &y, &names(5), DEFAULT_REPEATS, 1).unwrap(),
            imp
        );
    }

    #[test]
    fn unused_column_scores_zero() {
        let x = Matrix::from_rows(&(0..20).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 5.0 }).collect();
        let model = gbt_fit(
            &x,
            &y,
            GbtParams {
                n_trees: 5,
                max_depth: 1,
                ..GbtParams::default()
            },
        )
        .unwrap();
        let imp = permutation_importance(&model, &x, &y, &names(2), 5, 0).unwrap();
        assert_eq!(imp[1], ("x1".to_string(), 0.0));
        assert!(imp[0].1 > 0.0);
    }
}
