//! OLS with HC1 heteroskedasticity-robust covariance and per-coefficient
//! Student-t tests.

pub mod contrast;
pub mod tdist;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Qr};

/// Relative threshold on `|R_jj| / ||X_j||` below which column `j` is
/// treated as linearly dependent on earlier columns.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub covariance_hc1: Matrix,
    pub se: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub n: usize,
    pub k: usize,
    pub column_names: Vec<String>,
    /// Every residual is exactly zero: standard errors vanish and p-values
    /// are reported as 0.
    pub perfect_fit: bool,
}

fn check_inputs(x: &Matrix, y: Option<&[f64]>) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::NonFinite("design matrix".into()));
    }
    if let Some(y) = y {
        if y.len() != x.nrows() {
            return Err(Error::invalid(format!(
                "response has {} values for {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response vector".into()));
        }
    }
    if x.nrows() <= x.ncols() {
        return Err(Error::invalid(format!(
            "need more observations than columns (n = {}, k = {})",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

fn decompose_full_rank(x: &Matrix, names: &[String]) -> Result<Qr> {
    let qr = Qr::decompose(x);
    let dependent: Vec<String> = (0..x.ncols())
        .filter(|&j| {
            let norm = x.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            norm == 0.0 || qr.r_diag(j).abs() <= RANK_TOL * norm
        })
        .map(|j| names.get(j).cloned().unwrap_or_else(|| format!("column {j}")))
        .collect();
    if dependent.is_empty() {
        Ok(qr)
    } else {
        Err(Error::RankDeficient(dependent))
    }
}

fn default_names(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("x{j}")).collect()
}

/// Least squares through a Householder QR of `x`.
pub fn ols_fit(x: &Matrix, y: &[f64]) -> Result<OlsFit> {
    ols_fit_named(x, y, &default_names(x.ncols()))
}

pub fn ols_fit_named(x: &Matrix, y: &[f64], names: &[String]) -> Result<OlsFit> {
    check_inputs(x, Some(y))?;
    let qr = decompose_full_rank(x, names)?;
    let mut qty = y.to_vec();
    qr.apply_qt(&mut qty);
    let coefficients = qr.solve_r(&qty);
    let fitted = x.matvec(&coefficients);
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(OlsFit {
        coefficients,
        residuals,
    })
}

/// `n/(n-k) (X'X)^-1 X' diag(e^2) X (X'X)^-1`.
pub fn hc1_covariance(x: &Matrix, residuals: &[f64]) -> Result<Matrix> {
    check_inputs(x, Some(residuals))?;
    let (n, k) = (x.nrows(), x.ncols());
    let bread = decompose_full_rank(x, &default_names(k))?.inverse_gram();
    let mut meat = Matrix::zeros(k, k);
    for i in 0..n {
        let e2 = residuals[i] * residuals[i];
        if e2 == 0.0 {
            continue;
        }
        let row = x.row(i);
        for a in 0..k {
            let ra = row[a] * e2;
            for b in 0..k {
                meat[(a, b)] += ra * row[b];
            }
        }
    }
    let mut v = bread.matmul(&meat).matmul(&bread);
    let scale = n as f64 / (n - k) as f64;
    for i in 0..k {
        for j in 0..k {
            v[(i, j)] *= scale;
        }
    }
    // exact symmetry
    for i in 0..k {
        for j in i + 1..k {
            let avg = 0.5 * (v[(i, j)] + v[(j, i)]);
            v[(i, j)] = avg;
            v[(j, i)] = avg;
        }
    }
    Ok(v)
}

/// OLS + HC1 + two-sided Student-t tests with `n - k` degrees of freedom.
pub fn fit_robust(x: &Matrix, y: &[f64], column_names: &[String]) -> Result<RegressionFit> {
    if column_names.len() != x.ncols() {
        return Err(Error::invalid("one name per column required"));
    }
    let ols = ols_fit_named(x, y, column_names)?;
    let covariance_hc1 = hc1_covariance(x, &ols.residuals)?;
    let (n, k) = (x.nrows(), x.ncols());
    let perfect_fit = ols.residuals.iter().all(|&e| e == 0.0);
    let se: Vec<f64> = (0..k).map(|j| covariance_hc1[(j, j)].max(0.0).sqrt()).collect();
    let dof = (n - k) as f64;
    let (t_stats, p_values): (Vec<f64>, Vec<f64>) = ols
        .coefficients
        .iter()
        .zip(&se)
        .map(|(&b, &s)| {
            if s == 0.0 {
                (f64::NAN, 0.0)
            } else {
                let t = b / s;
                (t, tdist::two_sided_p(t, dof))
            }
        })
        .unzip();
    Ok(RegressionFit {
        coefficients: ols.coefficients,
        residuals: ols.residuals,
        covariance_hc1,
        se,
        t_stats,
        p_values,
        n,
        k,
        column_names: column_names.to_vec(),
        perfect_fit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefRow {
    pub name: String,
    pub coefficient: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    /// Standard error is zero, so the p-value is a convention (0), not a test.
    pub degenerate: bool,
}

/// Coefficient table rows for the requested columns (all columns when
/// `columns` is empty), in fit order.
pub fn coef_table(fit: &RegressionFit, columns: &[&str]) -> Vec<CoefRow> {
    fit.column_names
        .iter()
        .enumerate()
        .filter(|(_, name)| columns.is_empty() || columns.contains(&name.as_str()))
        .map(|(j, name)| CoefRow {
            name: name.clone(),
            coefficient: fit.coefficients[j],
            se: fit.se[j],
            t: fit.t_stats[j],
            p: fit.p_values[j],
            degenerate: fit.se[j] == 0.0,
        })
        .collect()
}
