use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// Absent when the true values have zero variance.
    pub r2: Option<f64>,
}

pub fn mean_squared_error(y_true: &[f64], y_pred: &[f64]) -> f64 {
    let sse: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    sse / y_true.len() as f64
}

pub fn evaluate(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "{} true values but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < 2 {
        return Err(Error::invalid("evaluation needs at least two observations"));
    }
    let n = y_true.len() as f64;
    let mut abs = 0.0;
    let mut sse = 0.0;
    for (t, p) in y_true.iter().zip(y_pred) {
        let e = t - p;
        abs += e.abs();
        sse += e * e;
    }
    let mean = y_true.iter().sum::<f64>() / n;
    let sst: f64 = y_true.iter().map(|t| (t - mean) * (t - mean)).sum();
    Ok(Metrics {
        mae: abs / n,
        rmse: (sse / n).sqrt(),
        r2: (sst > 0.0).then(|| 1.0 - sse / sst),
    })
}
