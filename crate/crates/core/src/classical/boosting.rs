//! Least-squares gradient boosting: start from the target mean and add
//! shrunken regression trees fitted to the current residuals.

use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, DecisionTree, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_stages: 200,
            learning_rate: 0.1,
            max_depth: Some(3),
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    init: f64,
    learning_rate: f64,
    stages: Vec<DecisionTree>,
    /// Training MSE after 0, 1, …, M stages.
    train_mse: Vec<f64>,
}

impl GradientBoosting {
    pub fn init(&self) -> f64 {
        self.init
    }

    pub fn n_features(&self) -> usize {
        self.stages.first().map_or(0, DecisionTree::n_features)
    }

    pub fn stages(&self) -> &[DecisionTree] {
        &self.stages
    }

    pub fn train_mse(&self) -> &[f64] {
        &self.train_mse
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.stages
            .iter()
            .fold(self.init, |acc, t| acc + self.learning_rate * t.predict_row(x))
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict_row(x.row(r))).collect()
    }
}

fn mse(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

pub fn fit_boosted(x: &Matrix, y: &[f64], params: BoostParams) -> Result<GradientBoosting> {
    if params.n_stages == 0 {
        return Err(Error::invalid("n_stages must be >= 1"));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::invalid("learning_rate must be in (0, 1]"));
    }
    if y.is_empty() {
        return Err(Error::invalid("no training rows"));
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    let init = y.iter().sum::<f64>() / y.len() as f64;
    let mut fitted = vec![init; y.len()];
    let mut train_mse = vec![mse(y, &fitted)];
    let mut stages = Vec::with_capacity(params.n_stages);
    for _ in 0..params.n_stages {
        let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let tree = fit_tree(x, &residuals, tree_params)?;
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += params.learning_rate * tree.predict_row(x.row(i));
        }
        train_mse.push(mse(y, &fitted));
        stages.push(tree);
    }
    Ok(GradientBoosting {
        init,
        learning_rate: params.learning_rate,
        stages,
        train_mse,
    })
}
