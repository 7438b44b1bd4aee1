//! Mini-batch training loop shared by the networks.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, ParamStore, Var};
use super::layers::{Mode, Pass};
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{self, Rng};

/// Targets are standardized for training and mapped back on prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    pub fn fit(y: &[f64]) -> Self {
        let (mean, std) = crate::preprocess::mean_std(y);
        TargetScaler {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        }
    }

    pub fn scale(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.mean) / self.std).collect()
    }

    pub fn unscale(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.std + self.mean).collect()
    }
}

pub(crate) trait Network {
    /// `n×1` prediction in standardized target units.
    fn predict_var(&self, g: &mut Graph, x: Var, pass: &mut Pass) -> Result<Var>;

    fn loss(&self, g: &mut Graph, x: Var, y: &[f64], pass: &mut Pass) -> Result<Var> {
        let p = self.predict_var(g, x, pass)?;
        g.mse(p, y)
    }
}

/// Loss and parameter gradients for one full batch.
pub(crate) fn objective<N: Network>(
    net: &N,
    store: &ParamStore,
    x: &Matrix,
    y: &[f64],
    mode: Mode,
) -> Result<(f64, Gradients)> {
    let mut rng = seed::rng(0);
    let mut pass = Pass::new(mode, &mut rng);
    let mut g = Graph::new(store);
    let xi = g.input(x.clone());
    let l = net.loss(&mut g, xi, y, &mut pass)?;
    Ok((g.scalar(l), g.backward(l)?))
}

pub(crate) fn predict_scaled<N: Network>(net: &N, store: &ParamStore, x: &Matrix) -> Result<Vec<f64>> {
    let mut rng = seed::rng(0);
    let mut pass = Pass::new(Mode::EVAL, &mut rng);
    let mut g = Graph::new(store);
    let xi = g.input(x.clone());
    let p = net.predict_var(&mut g, xi, &mut pass)?;
    Ok(g.value(p).data().to_vec())
}

/// One shuffled pass over the data; returns the row-weighted mean loss.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_epoch<N: Network>(
    net: &N,
    store: &mut ParamStore,
    adam: &mut Adam,
    x: &Matrix,
    y: &[f64],
    batch_size: usize,
    rng: &mut Rng,
    epoch: usize,
) -> Result<f64> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for chunk in order.chunks(batch_size.max(1)) {
        let xb = x.select_rows(chunk);
        let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
        let (loss, grads, updates) = {
            let mut pass = Pass::new(Mode::TRAIN, rng);
            let mut g = Graph::new(store);
            let xi = g.input(xb);
            let l = net.loss(&mut g, xi, &yb, &mut pass)?;
            let loss = g.scalar(l);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            (loss, g.backward(l)?, pass.buffer_updates)
        };
        adam.step(store, &grads);
        for (id, v) in updates {
            *store.get_mut(id) = v;
        }
        total += loss * chunk.len() as f64;
    }
    Ok(total / n as f64)
}

pub(crate) fn check_training_data(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() || y.is_empty() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if !x.all_finite() || !y.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    Ok(())
}
