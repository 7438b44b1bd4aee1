//! Random forest: bootstrap-sampled trees with per-split feature subsets,
//! predictions averaged over trees.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_tree_inputs, fit_on, DecisionTree, FeatureSampler, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features considered per split; `None` means `max(1, d / 3)`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: None,
            bootstrap: true,
            max_depth: TreeParams::default().max_depth,
            min_samples_leaf: TreeParams::default().min_samples_leaf,
        }
    }
}

impl ForestParams {
    pub fn tree(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    tree_seeds: Vec<u64>,
    max_features: usize,
}

impl RandomForest {
    pub fn n_features(&self) -> usize {
        self.trees.first().map_or(0, DecisionTree::n_features)
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn tree_seeds(&self) -> &[u64] {
        &self.tree_seeds
    }

    pub fn max_features(&self) -> usize {
        self.max_features
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict_row(x.row(r))).collect()
    }
}

pub fn fit_forest(x: &Matrix, y: &[f64], params: ForestParams, seed: u64) -> Result<RandomForest> {
    check_tree_inputs(x, y, &params.tree())?;
    if params.n_trees == 0 {
        return Err(Error::invalid("n_trees must be >= 1"));
    }
    let d = x.cols();
    let m = params.max_features.unwrap_or((d / 3).max(1));
    if m == 0 || m > d {
        return Err(Error::invalid(format!("max_features must be in 1..={d}, got {m}")));
    }
    let n = y.len();
    let tree_seeds: Vec<u64> = (0..params.n_trees as u64)
        .map(|t| seed::derive(seed, &[t]))
        .collect();
    // Each tree owns its generator, so the parallel map matches a
    // sequential loop exactly.
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = seed::rng(s);
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let sampler = FeatureSampler { m, rng: &mut rng };
            fit_on(x, y, idx, params.tree(), Some(sampler))
        })
        .collect();
    Ok(RandomForest {
        trees,
        tree_seeds,
        max_features: m,
    })
}
