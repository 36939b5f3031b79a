//! Least-squares gradient boosting over depth-limited regression trees.

use super::Regressor;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn collect_features(&self, out: &mut Vec<usize>) {
        if let TreeNode::Split {
            feature, left, right, ..
        } = self
        {
            out.push(*feature);
            left.collect_features(out);
            right.collect_features(out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Recorded for provenance; fitting itself draws no random numbers.
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 300,
            learning_rate: 0.05,
            max_depth: 3,
            min_leaf: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub trees: Vec<TreeNode>,
    pub initial_prediction: f64,
    pub params: GbtParams,
    /// Training MSE before any tree (index 0) and after each tree.
    pub train_mse: Vec<f64>,
}

impl GbtModel {
    pub fn learning_rate(&self) -> f64 {
        self.params.learning_rate
    }
}

/// Prediction from the first `k` trees, accumulated one tree at a time.
pub fn predict_with_trees(model: &GbtModel, x: &[f64], k: usize) -> f64 {
    let mut p = model.initial_prediction;
    for tree in &model.trees[..k.min(model.trees.len())] {
        p += model.params.learning_rate * tree.predict(x);
    }
    p
}

impl Regressor for GbtModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        predict_with_trees(self, x, self.trees.len())
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn mean_of(residuals: &[f64], rows: &[usize]) -> f64 {
    let mut s = 0.0;
    for &i in rows {
        s += residuals[i];
    }
    s / rows.len() as f64
}

fn find_split(x: &Matrix, residuals: &[f64], rows: &[usize], min_leaf: usize) -> Option<BestSplit> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let mut total = 0.0;
    let mut energy = 0.0;
    for &i in rows {
        total += residuals[i];
        energy += residuals[i] * residuals[i];
    }
    let parent = total * total / n as f64;
    // Gains this small relative to the node's residual energy are rounding.
    let floor = 1e-12 * energy;
    let mut best: Option<BestSplit> = None;
    let mut order = rows.to_vec();
    for f in 0..x.ncols() {
        order.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for pos in 0..n - 1 {
            left_sum += residuals[order[pos]];
            let nl = pos + 1;
            let nr = n - nl;
            let v = x[(order[pos], f)];
            let next = x[(order[pos + 1], f)];
            if v == next || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - parent;
            if gain > floor && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(BestSplit {
                    feature: f,
                    threshold: 0.5 * (v + next),
                    gain,
                });
            }
        }
    }
    best
}

fn grow(x: &Matrix, residuals: &[f64], rows: &[usize], depth: usize, params: &GbtParams) -> TreeNode {
    let leaf = || TreeNode::Leaf {
        value: mean_of(residuals, rows),
    };
    if depth >= params.max_depth {
        return leaf();
    }
    let Some(split) = find_split(x, residuals, rows, params.min_leaf) else {
        return leaf();
    };
    let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[(i, split.feature)] <= split.threshold);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(x, residuals, &left, depth + 1, params)),
        right: Box::new(grow(x, residuals, &right, depth + 1, params)),
    }
}

fn mse(y: &[f64], pred: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in y.iter().zip(pred) {
        s += (a - b) * (a - b);
    }
    s / y.len() as f64
}

pub fn gbt_fit(x: &Matrix, y: &[f64], params: GbtParams) -> Result<GbtModel> {
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("boosting inputs".into()));
    }
    if y.len() != x.nrows() {
        return Err(Error::invalid(format!(
            "response has {} values for {} rows",
            y.len(),
            x.nrows()
        )));
    }
    if params.min_leaf == 0 || y.len() < 2 * params.min_leaf {
        return Err(Error::invalid(format!(
            "need at least {} rows for min_leaf {}",
            2 * params.min_leaf.max(1),
            params.min_leaf
        )));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::invalid(format!(
            "learning rate must be in (0, 1], got {}",
            params.learning_rate
        )));
    }
    let n = y.len();
    let initial_prediction = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![initial_prediction; n];
    let rows: Vec<usize> = (0..n).collect();
    let mut train_mse = vec![mse(y, &pred)];
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let residuals: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let tree = grow(x, &residuals, &rows, 0, &params);
        let next: Vec<f64> = (0..n)
            .map(|i| pred[i] + params.learning_rate * tree.predict(x.row(i)))
            .collect();
        let next_mse = mse(y, &next);
        let last = *train_mse.last().expect("seeded");
        if next_mse <= last {
            pred = next;
            train_mse.push(next_mse);
            trees.push(tree);
        } else {
            // A step that only moves predictions by rounding noise; keep the
            // ensemble where it is.
            train_mse.push(last);
            trees.push(TreeNode::Leaf { value: 0.0 });
        }
    }
    Ok(GbtModel {
        trees,
        initial_prediction,
        params,
        train_mse,
    })
}
