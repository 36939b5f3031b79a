//! Elastic net by cyclic coordinate descent on standardized predictors.
//!
//! Objective, on standardized `Z` and centered `y`:
//! `(1/2n)·‖y − Zb‖² + λ·(α·‖b‖₁ + (1−α)/2·‖b‖²)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::mean_squared_error;
use super::Regressor;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Per-column centering and scaling. A zero scale marks a frozen column.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut scales = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means.push(mean);
            scales.push(if var > 0.0 { var.sqrt() } else { 0.0 });
        }
        Self { means, scales }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(x.nrows(), x.ncols());
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                z[(i, j)] = if self.scales[j] > 0.0 {
                    (x[(i, j)] - self.means[j]) / self.scales[j]
                } else {
                    0.0
                };
            }
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticNetModel {
    pub intercept: f64,
    /// Original-scale slopes.
    pub coefficients: Vec<f64>,
    /// Slopes on the standardized scale the solver works in.
    pub std_coefficients: Vec<f64>,
    pub lambda: f64,
    pub l1_ratio: f64,
    pub column_names: Vec<String>,
    pub standardization: Standardization,
    pub y_mean: f64,
    pub iterations: usize,
    pub reached_max_iter: bool,
}

impl Regressor for ElasticNetModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let mut p = self.intercept;
        for (b, v) in self.coefficients.iter().zip(x) {
            p += b * v;
        }
        p
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn check_finite(x: &Matrix, y: &[f64]) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::NonFinite("elastic net design matrix".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("elastic net response".into()));
    }
    if y.len() != x.nrows() {
        return Err(Error::invalid(format!(
            "response has {} values for {} rows",
            y.len(),
            x.nrows()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("elastic net needs at least one row"));
    }
    Ok(())
}

/// Penalized objective on the standardized scale.
pub fn objective(z: &Matrix, yc: &[f64], b: &[f64], lambda: f64, l1_ratio: f64) -> f64 {
    let n = z.nrows() as f64;
    let fitted = z.matvec(b);
    let rss: f64 = yc.iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum();
    let l1: f64 = b.iter().map(|v| v.abs()).sum();
    let l2: f64 = b.iter().map(|v| v * v).sum();
    rss / (2.0 * n) + lambda * (l1_ratio * l1 + 0.5 * (1.0 - l1_ratio) * l2)
}

/// Coordinate descent from the warm start in `b`; returns (sweeps, hit_cap).
fn descend(
    z: &Matrix,
    yc: &[f64],
    b: &mut [f64],
    lambda: f64,
    l1_ratio: f64,
    tol: f64,
    max_iter: usize,
) -> (usize, bool) {
    let n = z.nrows();
    let p = z.ncols();
    let inv_n = 1.0 / n as f64;
    let norms: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| z[(i, j)] * z[(i, j)]).sum::<f64>() * inv_n)
        .collect();
    let fitted = z.matvec(b);
    let mut r: Vec<f64> = yc.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let l1 = lambda * l1_ratio;
    let l2 = lambda * (1.0 - l1_ratio);
    for sweep in 1..=max_iter {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if norms[j] == 0.0 {
                b[j] = 0.0;
                continue;
            }
            let old = b[j];
            let mut rho = 0.0;
            for i in 0..n {
                rho += z[(i, j)] * r[i];
            }
            rho = rho * inv_n + norms[j] * old;
            let new = soft_threshold(rho, l1) / (norms[j] + l2);
            if new != old {
                let d = new - old;
                for i in 0..n {
                    r[i] -= z[(i, j)] * d;
                }
                b[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        if max_change < tol {
            return (sweep, false);
        }
    }
    (max_iter, true)
}

fn fit_from(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    l1_ratio: f64,
    tol: f64,
    max_iter: usize,
    warm: Option<&[f64]>,
) -> Result<ElasticNetModel> {
    check_finite(x, y)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    if !(0.0..=1.0).contains(&l1_ratio) {
        return Err(Error::invalid(format!("l1_ratio must be in [0, 1], got {l1_ratio}")));
    }
    let standardization = Standardization::fit(x);
    let z = standardization.apply(x);
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut b = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.ncols()]);
    let (iterations, reached_max_iter) = descend(&z, &yc, &mut b, lambda, l1_ratio, tol, max_iter);
    let coefficients: Vec<f64> = b
        .iter()
        .zip(&standardization.scales)
        .map(|(bj, s)| if *s > 0.0 { bj / s } else { 0.0 })
        .collect();
    let mut intercept = y_mean;
    for (c, m) in coefficients.iter().zip(&standardization.means) {
        intercept -= c * m;
    }
    Ok(ElasticNetModel {
        intercept,
        coefficients,
        std_coefficients: b,
        lambda,
        l1_ratio,
        column_names: Vec::new(),
        standardization,
        y_mean,
        iterations,
        reached_max_iter,
    })
}

pub fn elastic_net_fit(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    l1_ratio: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ElasticNetModel> {
    fit_from(x, y, lambda, l1_ratio, tol, max_iter, None)
}

/// Smallest λ at which every standardized slope is zero, for the given
/// mixing ratio: `max_j |(1/n)·Z_jᵀ(y − ȳ)| / α`.
pub fn lambda_max(x: &Matrix, y: &[f64], l1_ratio: f64) -> f64 {
    let z = Standardization::fit(x).apply(x);
    let n = y.len() as f64;
    let inv_n = 1.0 / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut best: f64 = 0.0;
    for j in 0..z.ncols() {
        // same arithmetic as the first coordinate step from zero
        let mut g = 0.0;
        for (i, r) in yc.iter().enumerate() {
            g += z[(i, j)] * r;
        }
        best = best.max((g * inv_n).abs());
    }
    let a = l1_ratio.max(1e-3);
    let mut lmax = best / a;
    while lmax * a < best {
        lmax = lmax.next_up();
    }
    lmax
}

/// `count` log-spaced values from `lmax` down to `min_ratio·lmax`.
pub fn lambda_grid(lmax: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    if count == 1 || lmax <= 0.0 {
        return vec![lmax.max(0.0); count.max(1)];
    }
    let hi = lmax.ln();
    let lo = (lmax * min_ratio).ln();
    (0..count)
        .map(|k| (hi + (lo - hi) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub n_lambdas: usize,
    pub lambda_min_ratio: f64,
    pub l1_grid: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            n_lambdas: 50,
            lambda_min_ratio: 1e-3,
            l1_grid: vec![0.1, 0.5, 0.9],
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvPoint {
    pub lambda: f64,
    pub l1_ratio: f64,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda: f64,
    pub l1_ratio: f64,
    pub table: Vec<CvPoint>,
}

pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

fn better(candidate: &CvPoint, incumbent: &CvPoint) -> bool {
    if candidate.mean_mse != incumbent.mean_mse {
        return candidate.mean_mse < incumbent.mean_mse;
    }
    if candidate.lambda != incumbent.lambda {
        return candidate.lambda > incumbent.lambda;
    }
    candidate.l1_ratio > incumbent.l1_ratio
}

pub fn cross_validate_enet(x: &Matrix, y: &[f64], config: &CvConfig) -> Result<CvResult> {
    check_finite(x, y)?;
    let n = x.nrows();
    if config.folds < 2 || n < config.folds {
        return Err(Error::invalid(format!(
            "cannot run {}-fold validation on {n} rows",
            config.folds
        )));
    }
    if config.l1_grid.is_empty() {
        return Err(Error::invalid("empty l1_ratio grid"));
    }
    let fold = fold_assignment(n, config.folds, config.seed);
    let mut table = Vec::new();
    for &l1_ratio in &config.l1_grid {
        let grid = lambda_grid(lambda_max(x, y, l1_ratio), config.n_lambdas, config.lambda_min_ratio);
        let mut totals = vec![0.0; grid.len()];
        for k in 0..config.folds {
            let train: Vec<usize> = (0..n).filter(|&i| fold[i] != k).collect();
            let valid: Vec<usize> = (0..n).filter(|&i| fold[i] == k).collect();
            let xt = x.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let xv = x.select_rows(&valid);
            let yv: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
            let mut warm: Option<Vec<f64>> = None;
            for (g, &lambda) in grid.iter().enumerate() {
                let model = fit_from(&xt, &yt, lambda, l1_ratio, config.tol, config.max_iter, warm.as_deref())?;
                totals[g] += mean_squared_error(&yv, &model.predict(&xv));
                warm = Some(model.std_coefficients);
            }
        }
        for (g, &lambda) in grid.iter().enumerate() {
            table.push(CvPoint {
                lambda,
                l1_ratio,
                mean_mse: totals[g] / config.folds as f64,
            });
        }
    }
    let best = table
        .iter()
        .skip(1)
        .fold(table[0], |acc, p| if better(p, &acc) { *p } else { acc });
    Ok(CvResult {
        lambda: best.lambda,
        l1_ratio: best.l1_ratio,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::ols_fit;
    use rand::Rng;

    fn problem(seed: u64, n: usize, p: usize, noise: f64) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Matrix::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                x[(i, j)] = rng.random_range(-3.0..3.0) * (j + 1) as f64 + j as f64;
            }
        }
        let y = (0..n)
            .map(|i| {
                2.0 + (0..p).map(|j| (j as f64 - 1.5) * x[(i, j)]).sum::<f64>() + noise * rng.random_range(-1.0..1.0)
            })
            .collect();
        (x, y)
    }

    fn with_intercept(x: &Matrix) -> Matrix {
        let mut m = Matrix::zeros(x.nrows(), x.ncols() + 1);
        for i in 0..x.nrows() {
            m[(i, 0)] = 1.0;
            for j in 0..x.ncols() {
                m[(i, j + 1)] = x[(i, j)];
            }
        }
        m
    }

    #[test]
    fn unpenalized_matches_ols() {
        let (x, y) = problem(1, 50, 4, 1.0);
        let m = elastic_net_fit(&x, &y, 0.0, 0.5, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let ols = ols_fit(&with_intercept(&x), &y).unwrap();
        assert!((m.intercept - ols.coefficients[0]).abs() < 1e-6);
        for j in 0..4 {
            assert!((m.coefficients[j] - ols.coefficients[j + 1]).abs() < 1e-6);
        }
        assert!(!m.reached_max_iter);
    }

    #[test]
    fn full_shrinkage_at_lambda_max() {
        let (x, y) = problem(2, 30, 5, 2.0);
        let lmax = lambda_max(&x, &y, 1.0);
        let m = elastic_net_fit(&x, &y, lmax, 1.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(m.coefficients.iter().all(|&b| b == 0.0));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.intercept - mean).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_column_is_frozen() {
        let (mut x, y) = problem(3, 30, 3, 1.0);
        x.set_column(1, &[4.0; 30]);
        let m = elastic_net_fit(&x, &y, 0.01, 0.5, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(m.coefficients[1], 0.0);
        assert!(m.coefficients.iter().all(|b| b.is_finite()));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let (mut x, y) = problem(4, 10, 2, 1.0);
        x[(3, 1)] = f64::NAN;
        assert!(elastic_net_fit(&x, &y, 0.1, 0.5, DEFAULT_TOL, DEFAULT_MAX_ITER).is_err());
    }

    #[test]
    fn local_optimality_probe() {
        let (x, y) = problem(5, 40, 6, 3.0);
        let (lambda, alpha) = (0.1, 0.5);
        let m = elastic_net_fit(&x, &y, lambda, alpha, 1e-12, DEFAULT_MAX_ITER).unwrap();
        let z = m.standardization.apply(&x);
        let yc: Vec<f64> = y.iter().map(|v| v - m.y_mean).collect();
        let f0 = objective(&z, &yc, &m.std_coefficients, lambda, alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let b: Vec<f64> = m
                .std_coefficients
                .iter()
                .map(|v| v + rng.random_range(-1e-3..1e-3))
                .collect();
            assert!(f0 <= objective(&z, &yc, &b, lambda, alpha) + 1e-12);
        }
    }

    #[test]
    fn noiseless_cv_picks_small_lambda() {
        let (x, y) = problem(6, 60, 3, 0.0);
        let cv = cross_validate_enet(&x, &y, &CvConfig::default()).unwrap();
        let lmax = lambda_max(&x, &y, cv.l1_ratio);
        assert!(cv.lambda <= lmax * 2e-3, "{} vs {}", cv.lambda, lmax);
        assert_eq!(cv.table.len(), 150);
        assert_eq!(cross_validate_enet(&x, &y, &CvConfig::default()).unwrap(), cv);
    }

    #[test]
    fn noise_response_is_shrunk() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (x, _) = problem(7, 60, 4, 0.0);
        let y: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cv = cross_validate_enet(&x, &y, &CvConfig::default()).unwrap();
        let lmin = lambda_grid(lambda_max(&x, &y, cv.l1_ratio), 50, 1e-3)[49];
        let chosen = elastic_net_fit(&x, &y, cv.lambda, cv.l1_ratio, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let loose = elastic_net_fit(&x, &y, lmin, cv.l1_ratio, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let l1 = |m: &ElasticNetModel| m.std_coefficients.iter().map(|v| v.abs()).sum::<f64>();
        assert!(l1(&chosen) < l1(&loose));
    }

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid(10.0, 50, 1e-3);
        assert_eq!(g.len(), 50);
        assert!((g[0] - 10.0).abs() < 1e-12);
        assert!((g[49] - 0.01).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }
}
