//! Predictive models for launch deltas and their evaluation reports.

pub mod enet;
pub mod gbt;
pub mod importance;
pub mod metrics;
pub mod split;

use crate::align::Horizon;
use crate::error::Result;
use crate::features::{DesignMatrix, FeatureSet, INTERCEPT};
use crate::linalg::Matrix;
use crate::report::table::{fmt_metric, fmt_opt, Table};

pub trait Regressor {
    fn predict_row(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    ElasticNet,
    GradientBoosting,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::ElasticNet, ModelKind::GradientBoosting];

    pub fn key(self) -> &'static str {
        match self {
            ModelKind::ElasticNet => "enet",
            ModelKind::GradientBoosting => "gbt",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::ElasticNet => "Elastic Net",
            ModelKind::GradientBoosting => "Gradient Boosting",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub train_ratio: f64,
    pub seed: u64,
    pub cv: enet::CvConfig,
    pub gbt: gbt::GbtParams,
    pub importance_repeats: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            train_ratio: 0.8,
            seed: 42,
            cv: enet::CvConfig::default(),
            gbt: gbt::GbtParams::default(),
            importance_repeats: importance::DEFAULT_REPEATS,
        }
    }
}

impl LearnConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.cv.seed = seed;
        self.gbt.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub model: ModelKind,
    pub target: Horizon,
    pub feature_set: FeatureSet,
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub train_n: usize,
    pub test_n: usize,
    /// (column, mean R² drop), highest first.
    pub importance: Vec<(String, f64)>,
    pub hyperparameters: Vec<(String, String)>,
}

impl ModelReport {
    pub fn leaky(&self) -> bool {
        self.feature_set == FeatureSet::WithLeaky
    }

    pub fn file_name(&self) -> String {
        format!(
            "report_{}_{}_{}.csv",
            self.model.key(),
            self.target.key(),
            self.feature_set.key()
        )
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["section", "name", "value"]);
        let mut push = |s: &str, n: &str, v: String| t.push(vec![s.into(), n.into(), v]);
        push("model", "model", self.model.key().into());
        push("model", "target", self.target.key().into());
        push("model", "feature_set", self.feature_set.key().into());
        push("model", "leaky", self.leaky().to_string());
        push("metric", "mae", fmt_metric(self.mae));
        push("metric", "rmse", fmt_metric(self.rmse));
        push("metric", "r2", fmt_opt(self.r2, fmt_metric));
        push("metric", "train_n", self.train_n.to_string());
        push("metric", "test_n", self.test_n.to_string());
        for (k, v) in &self.hyperparameters {
            push("hyperparameter", k, v.clone());
        }
        for (c, s) in &self.importance {
            push("importance", c, fmt_metric(*s));
        }
        t
    }
}

pub const PERFORMANCE_HEADER: [&str; 9] = [
    "model",
    "target",
    "feature_set",
    "leaky",
    "mae",
    "rmse",
    "r2",
    "train_n",
    "test_n",
];

pub fn performance_table(reports: &[ModelReport]) -> Table {
    let mut t = Table::new(&PERFORMANCE_HEADER);
    for r in reports {
        t.push(vec![
            r.model.label().into(),
            r.target.label().into(),
            r.feature_set.key().into(),
            r.leaky().to_string(),
            fmt_metric(r.mae),
            fmt_metric(r.rmse),
            fmt_opt(r.r2, fmt_metric),
            r.train_n.to_string(),
            r.test_n.to_string(),
        ]);
    }
    t
}

/// Design matrix without the intercept column; both learners fit their own
/// offset.
pub fn learning_inputs(design: &DesignMatrix) -> (Matrix, Vec<String>) {
    let keep: Vec<usize> = (0..design.columns.len())
        .filter(|&j| design.columns[j] != INTERCEPT)
        .collect();
    (
        design.x.select_columns(&keep),
        keep.iter().map(|&j| design.columns[j].clone()).collect(),
    )
}

/// Split, fit on the training part, score and rank features on the test part.
pub fn fit_and_report(
    kind: ModelKind,
    design: &DesignMatrix,
    feature_set: FeatureSet,
    target: Horizon,
    config: &LearnConfig,
) -> Result<ModelReport> {
    let (x, columns) = learning_inputs(design);
    let (train, test) = split::split_indices(x.nrows(), config.train_ratio, config.seed)?;
    let xt = x.select_rows(&train);
    let yt: Vec<f64> = train.iter().map(|&i| design.y[i]).collect();
    let xv = x.select_rows(&test);
    let yv: Vec<f64> = test.iter().map(|&i| design.y[i]).collect();
    let (model, hyperparameters): (Box<dyn Regressor>, Vec<(String, String)>) = match kind {
        ModelKind::ElasticNet => {
            let cv = enet::cross_validate_enet(&xt, &yt, &config.cv)?;
            let mut m = enet::elastic_net_fit(&xt, &yt, cv.lambda, cv.l1_ratio, config.cv.tol, config.cv.max_iter)?;
            m.column_names = columns.clone();
            if m.reached_max_iter {
                log::warn!(
                    "elastic net for {} ({}) stopped at the iteration cap",
                    target.key(),
                    feature_set.key()
                );
            }
            let hp = vec![
                ("lambda".into(), format!("{:.6e}", cv.lambda)),
                ("l1_ratio".into(), cv.l1_ratio.to_string()),
                ("folds".into(), config.cv.folds.to_string()),
                ("n_lambdas".into(), config.cv.n_lambdas.to_string()),
                ("iterations".into(), m.iterations.to_string()),
                ("reached_max_iter".into(), m.reached_max_iter.to_string()),
                ("seed".into(), config.cv.seed.to_string()),
            ];
            (Box::new(m), hp)
        }
        ModelKind::GradientBoosting => {
            let m = gbt::gbt_fit(&xt, &yt, config.gbt)?;
            let p = config.gbt;
            let hp = vec![
                ("n_trees".into(), p.n_trees.to_string()),
                ("learning_rate".into(), p.learning_rate.to_string()),
                ("max_depth".into(), p.max_depth.to_string()),
                ("min_leaf".into(), p.min_leaf.to_string()),
                ("seed".into(), p.seed.to_string()),
            ];
            (Box::new(m), hp)
        }
    };
    let m = metrics::evaluate(&yv, &model.predict(&xv))?;
    let importance = importance::permutation_importance(
        model.as_ref(),
        &xv,
        &yv,
        &columns,
        config.importance_repeats,
        config.seed,
    )?;
    Ok(ModelReport {
        model: kind,
        target,
        feature_set,
        mae: m.mae,
        rmse: m.rmse,
        r2: m.r2,
        train_n: train.len(),
        test_n: test.len(),
        importance,
        hyperparameters,
    })
}
