//! CART regression tree with exhaustive midpoint split search.
//!
//! At each node every candidate feature is sorted and every midpoint between
//! consecutive distinct values is scored by the two-region sum of squared
//! errors. Ties go to the lower feature index, then the lower threshold.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::Rng;

/// Losses closer than this (relative to the node SSE) count as ties.
pub(crate) const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeParams {
    /// `None` grows until another stopping rule fires.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: Some(12),
            min_samples_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Arena-allocated tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict_row(x.row(r))).collect()
    }
}

/// Midpoint of two distinct sorted values that still separates them.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub loss: f64,
}

/// Feature sampling for forests: `m` of `d` features per node.
pub(crate) struct FeatureSampler<'a> {
    pub m: usize,
    pub rng: &'a mut Rng,
}

struct Builder<'a, 'r> {
    x: &'a Matrix,
    y: &'a [f64],
    params: TreeParams,
    sampler: Option<FeatureSampler<'r>>,
    nodes: Vec<Node>,
}

impl Builder<'_, '_> {
    fn candidates(&mut self) -> Vec<usize> {
        let d = self.x.cols();
        match &mut self.sampler {
            Some(s) if s.m < d => {
                let mut f = index::sample(s.rng, d, s.m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<SplitChoice> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let centered: Vec<f64> = idx.iter().map(|&i| self.y[i] - mean).collect();
        let sse: f64 = centered.iter().map(|v| v * v).sum();
        let tol = TIE_TOLERANCE * sse.max(1e-300);

        let mut best: Option<SplitChoice> = None;
        let mut order: Vec<usize> = (0..n).collect();
        for j in self.candidates() {
            order.sort_by(|&a, &b| self.x.get(idx[a], j).total_cmp(&self.x.get(idx[b], j)));
            let mut left_sum = 0.0;
            for p in 1..n {
                left_sum += centered[order[p - 1]];
                if p < min_leaf || n - p < min_leaf {
                    continue;
                }
                let lo = self.x.get(idx[order[p - 1]], j);
                let hi = self.x.get(idx[order[p]], j);
                if lo >= hi {
                    continue;
                }
                // Centered sums: S_R = −S_L.
                let (nl, nr) = (p as f64, (n - p) as f64);
                let loss = sse - left_sum * left_sum * (1.0 / nl + 1.0 / nr);
                if best.is_none_or(|b| loss < b.loss - tol) {
                    best = Some(SplitChoice {
                        feature: j,
                        threshold: midpoint(lo, hi),
                        loss,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let n = idx.len();
        let value = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { value });

        let min_leaf = self.params.min_samples_leaf.max(1);
        let first = self.y[idx[0]];
        if self.params.max_depth.is_some_and(|m| depth >= m)
            || n < 2 * min_leaf
            || idx.iter().all(|&i| self.y[i] == first)
        {
            return slot;
        }
        let Some(choice) = self.best_split(&idx) else {
            return slot;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.x.get(i, choice.feature) <= choice.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
        };
        slot
    }
}

fn check_inputs(x: &Matrix, y: &[f64], params: &TreeParams) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::invalid("min_samples_leaf must be >= 1"));
    }
    if y.len() < 2 * params.min_samples_leaf {
        return Err(Error::invalid(format!(
            "need at least {} samples for min_samples_leaf = {}, got {}",
            2 * params.min_samples_leaf,
            params.min_samples_leaf,
            y.len()
        )));
    }
    if x.cols() == 0 {
        return Err(Error::invalid("no features"));
    }
    Ok(())
}

/// Fits on the rows listed in `idx` (duplicates allowed, as in bootstrap
/// samples).
pub(crate) fn fit_on(
    x: &Matrix,
    y: &[f64],
    idx: Vec<usize>,
    params: TreeParams,
    sampler: Option<FeatureSampler<'_>>,
) -> DecisionTree {
    let mut b = Builder {
        x,
        y,
        params,
        sampler,
        nodes: Vec::new(),
    };
    b.grow(idx, 0);
    DecisionTree {
        nodes: b.nodes,
        n_features: x.cols(),
    }
}

pub fn fit_tree(x: &Matrix, y: &[f64], params: TreeParams) -> Result<DecisionTree> {
    check_inputs(x, y, &params)?;
    Ok(fit_on(x, y, (0..y.len()).collect(), params, None))
}

pub(crate) fn check_tree_inputs(x: &Matrix, y: &[f64], params: &TreeParams) -> Result<()> {
    check_inputs(x, y, params)
}
