//! Parameterized building blocks shared by the networks.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, ParamId, ParamStore, Var};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::seed::Rng;

/// How a forward pass treats stochastic and batch-dependent layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub dropout: bool,
    /// Normalize with (ghost) batch statistics instead of running averages.
    pub batch_stats: bool,
    /// Fold batch statistics into the running averages.
    pub update_running: bool,
}

impl Mode {
    pub const TRAIN: Mode = Mode {
        dropout: true,
        batch_stats: true,
        update_running: true,
    };
    pub const EVAL: Mode = Mode {
        dropout: false,
        batch_stats: false,
        update_running: false,
    };
}

/// Mutable state threaded through a forward pass.
pub struct Pass<'r> {
    pub mode: Mode,
    pub rng: &'r mut Rng,
    /// New values for running-statistics buffers, applied after the step.
    pub buffer_updates: Vec<(ParamId, Matrix)>,
}

impl<'r> Pass<'r> {
    pub fn new(mode: Mode, rng: &'r mut Rng) -> Self {
        Pass {
            mode,
            rng,
            buffer_updates: Vec::new(),
        }
    }

    pub fn apply_updates(self, store: &mut ParamStore) {
        for (id, value) in self.buffer_updates {
            *store.get_mut(id) = value;
        }
    }
}

/// Glorot-uniform matrix.
pub fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let w = store.add(format!("{name}.w"), glorot(inputs, outputs, rng), true);
        let b = store.add(format!("{name}.b"), Matrix::zeros(1, outputs), true);
        Linear { w, b }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let h = g.matmul(x, w)?;
        g.add_bias(h, b)
    }
}

/// Inverted dropout; identity unless the pass enables dropout.
pub fn dropout(g: &mut Graph, x: Var, p: f64, pass: &mut Pass) -> Result<Var> {
    if !pass.mode.dropout || p <= 0.0 {
        return Ok(x);
    }
    let (r, c) = g.value(x).shape();
    let keep = 1.0 - p;
    let data = (0..r * c)
        .map(|_| if pass.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    g.dropout(x, Matrix::from_vec(r, c, data)?)
}

/// Batch normalization computed over contiguous virtual batches.
///
/// A trailing virtual batch of fewer than two rows is merged into the
/// previous one; a one-row batch falls back to the running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostBatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub virtual_batch: usize,
    pub momentum: f64,
    pub eps: f64,
}

impl GhostBatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, virtual_batch: usize, momentum: f64) -> Self {
        GhostBatchNorm {
            gamma: store.add(format!("{name}.gamma"), Matrix::filled(1, dim, 1.0), true),
            beta: store.add(format!("{name}.beta"), Matrix::zeros(1, dim), true),
            running_mean: store.add(format!("{name}.running_mean"), Matrix::zeros(1, dim), false),
            running_var: store.add(format!("{name}.running_var"), Matrix::filled(1, dim, 1.0), false),
            virtual_batch: virtual_batch.max(1),
            momentum,
            eps: 1e-5,
        }
    }

    pub fn groups(&self, n: usize) -> Vec<(usize, usize)> {
        let mut groups: Vec<(usize, usize)> = (0..n)
            .step_by(self.virtual_batch)
            .map(|s| (s, (s + self.virtual_batch).min(n)))
            .collect();
        if groups.len() > 1 {
            let (s, e) = *groups.last().expect("nonempty");
            if e - s < 2 {
                groups.pop();
                groups.last_mut().expect("nonempty").1 = e;
            }
        }
        groups
    }

    pub fn forward(&self, g: &mut Graph, x: Var, pass: &mut Pass) -> Result<Var> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        let n = g.value(x).rows();
        if !pass.mode.batch_stats || n < 2 {
            let store = g.store();
            let mean = store.get(self.running_mean).row(0).to_vec();
            let var = store.get(self.running_var).row(0).to_vec();
            return g.frozen_norm(x, gamma, beta, &mean, &var, self.eps);
        }
        let (out, stats) = g.batch_norm(x, gamma, beta, &self.groups(n), self.eps)?;
        if pass.mode.update_running {
            let store = g.store();
            let mut rm = store.get(self.running_mean).clone();
            let mut rv = store.get(self.running_var).clone();
            for (mean, var) in stats {
                for (r, m) in rm.data_mut().iter_mut().zip(&mean) {
                    *r = (1.0 - self.momentum) * *r + self.momentum * m;
                }
                for (r, v) in rv.data_mut().iter_mut().zip(&var) {
                    *r = (1.0 - self.momentum) * *r + self.momentum * v;
                }
            }
            pass.buffer_updates.push((self.running_mean, rm));
            pass.buffer_updates.push((self.running_var, rv));
        }
        Ok(out)
    }
}
