//! The adjusted timing and format contrasts, each a separate robust fit.

use super::{coef_table, fit_robust, CoefRow, RegressionFit};
use crate::align::Horizon;
use crate::features::{value_of, FeatureRow, INTERCEPT};
use crate::linalg::Matrix;
use crate::report::table::{fmt_p, fmt_stars, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contrast {
    ShowHn,
    Weekend,
    HourBins,
}

/// Shared control set; the weekend contrast omits `is_weekend` from it.
pub const CONTROLS: [&str; 5] = [
    "baseline_stars",
    "hn_score",
    "repo_age_days",
    "title_length",
    "is_weekend",
];

impl Contrast {
    pub const ALL: [Contrast; 3] = [Contrast::ShowHn, Contrast::Weekend, Contrast::HourBins];

    pub fn key(self) -> &'static str {
        match self {
            Contrast::ShowHn => "show_hn",
            Contrast::Weekend => "weekend",
            Contrast::HourBins => "hour_bins",
        }
    }

    pub fn effects(self) -> &'static [&'static str] {
        match self {
            Contrast::ShowHn => &["is_show_hn"],
            Contrast::Weekend => &["is_weekend"],
            Contrast::HourBins => &["hour_06_11", "hour_12_17", "hour_18_23"],
        }
    }

    pub fn controls(self) -> Vec<&'static str> {
        CONTROLS
            .iter()
            .copied()
            .filter(|c| !self.effects().contains(c))
            .collect()
    }

    pub fn columns(self) -> Vec<&'static str> {
        let mut cols = vec![INTERCEPT];
        cols.extend(self.effects());
        cols.extend(self.controls());
        cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastFit {
    pub contrast: Contrast,
    pub target: Horizon,
    /// Non-intercept columns removed before fitting because they were constant.
    pub dropped: Vec<String>,
    pub fit: Option<RegressionFit>,
    /// Why the fit could not be estimated, when `fit` is absent.
    pub failure: Option<String>,
}

impl ContrastFit {
    pub fn effect_rows(&self) -> Vec<CoefRow> {
        match &self.fit {
            Some(fit) => coef_table(fit, self.contrast.effects()),
            None => Vec::new(),
        }
    }
}

pub fn run_contrast(rows: &[FeatureRow], contrast: Contrast, target: Horizon) -> ContrastFit {
    let mut result = ContrastFit {
        contrast,
        target,
        dropped: Vec::new(),
        fit: None,
        failure: None,
    };
    if rows.is_empty() {
        result.failure = Some("no rows".into());
        return result;
    }
    let mut columns: Vec<&str> = Vec::new();
    for col in contrast.columns() {
        let first = value_of(&rows[0], col).expect("known column");
        let constant = rows.iter().all(|r| value_of(r, col).expect("known column") == first);
        if col != INTERCEPT && constant {
            log::info!(
                "{} regression at {}: dropping constant column {col}",
                contrast.key(),
                target.key()
            );
            result.dropped.push(col.to_string());
        } else {
            columns.push(col);
        }
    }
    let mut x = Matrix::zeros(rows.len(), columns.len());
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in columns.iter().enumerate() {
            x[(i, j)] = value_of(r, c).expect("known column");
        }
    }
    let y: Vec<f64> = rows.iter().map(|r| r.target(target) as f64).collect();
    let names: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
    match fit_robust(&x, &y, &names) {
        Ok(fit) => result.fit = Some(fit),
        Err(e) => {
            log::warn!("{} regression at {} not estimated: {e}", contrast.key(), target.key());
            result.failure = Some(e.to_string());
        }
    }
    result
}

pub const REGRESSION_HEADER: [&str; 5] = ["effect", "coefficient", "std_error", "p_value", "note"];

pub fn regression_table(cf: &ContrastFit) -> Table {
    let mut t = Table::new(&REGRESSION_HEADER);
    match &cf.fit {
        Some(fit) => {
            for row in coef_table(fit, &[]) {
                let role = if row.name == INTERCEPT {
                    "intercept"
                } else if cf.contrast.effects().contains(&row.name.as_str()) {
                    "contrast"
                } else {
                    "control"
                };
                let note = if row.degenerate {
                    format!("{role}; zero standard error, p-value by convention")
                } else {
                    role.to_string()
                };
                t.push(vec![
                    row.name,
                    fmt_stars(row.coefficient),
                    fmt_stars(row.se),
                    fmt_p(row.p),
                    note,
                ]);
            }
        }
        None => {
            for e in cf.contrast.effects() {
                if !cf.dropped.iter().any(|d| d == e) {
                    t.push(vec![
                        e.to_string(),
                        String::new(),
                        String::new(),
                        String::new(),
                        format!("not estimated: {}", cf.failure.as_deref().unwrap_or("unknown")),
                    ]);
                }
            }
        }
    }
    for d in &cf.dropped {
        t.push(vec![
            d.clone(),
            String::new(),
            String::new(),
            String::new(),
            "dropped: constant column".into(),
        ]);
    }
    t
}
