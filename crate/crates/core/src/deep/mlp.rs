//! Plain MLP and the feature-gating AttentionMLP.
//!
//! The attention block computes `α = sigmoid(W₂·ReLU(W₁x + b₁) + b₂)` and
//! feeds `x ⊙ α` to the same ReLU/dropout stack the plain MLP uses.

use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, ParamStore, Var};
use super::layers::{dropout, Linear, Mode, Pass};
use super::optim::Adam;
use super::train::{check_training_data, objective, predict_scaled, run_epoch, Network, TargetScaler};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    /// Width of the attention block (AttentionMLP only).
    pub attention_hidden: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![256, 128, 64],
            attention_hidden: 128,
            dropout: 0.2,
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 40,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("hidden sizes must be nonempty and positive"));
        }
        if self.attention_hidden == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("attention_hidden, batch_size and epochs must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must be in [0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stack {
    hidden: Vec<Linear>,
    out: Linear,
    dropout: f64,
}

impl Stack {
    fn new(store: &mut ParamStore, prefix: &str, inputs: usize, cfg: &MlpConfig, rng: &mut Rng) -> Self {
        let mut width = inputs;
        let mut hidden = Vec::new();
        for (i, &h) in cfg.hidden.iter().enumerate() {
            hidden.push(Linear::new(store, &format!("{prefix}.hidden{i}"), width, h, rng));
            width = h;
        }
        Stack {
            hidden,
            out: Linear::new(store, &format!("{prefix}.out"), width, 1, rng),
            dropout: cfg.dropout,
        }
    }

    fn forward(&self, g: &mut Graph, x: Var, pass: &mut Pass) -> Result<Var> {
        let mut h = x;
        for layer in &self.hidden {
            let z = layer.forward(g, h)?;
            let a = g.relu(z);
            h = dropout(g, a, self.dropout, pass)?;
        }
        self.out.forward(g, h)
    }
}

impl Network for Stack {
    fn predict_var(&self, g: &mut Graph, x: Var, pass: &mut Pass) -> Result<Var> {
        self.forward(g, x, pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Gated {
    gate_in: Linear,
    gate_out: Linear,
    body: Stack,
}

impl Gated {
    fn gate(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.gate_in.forward(g, x)?;
        let h = g.relu(h);
        let z = self.gate_out.forward(g, h)?;
        Ok(g.sigmoid(z))
    }
}

impl Network for Gated {
    fn predict_var(&self, g: &mut Graph, x: Var, pass: &mut Pass) -> Result<Var> {
        let alpha = self.gate(g, x)?;
        let attended = g.mul(x, alpha)?;
        self.body.forward(g, attended, pass)
    }
}

fn fit<N: Network>(
    net: &N,
    store: &mut ParamStore,
    x: &Matrix,
    y_scaled: &[f64],
    cfg: &MlpConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(cfg.learning_rate, store.len());
    (1..=cfg.epochs)
        .map(|epoch| run_epoch(net, store, &mut adam, x, y_scaled, cfg.batch_size, rng, epoch))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    config: MlpConfig,
    n_features: usize,
    store: ParamStore,
    net: Stack,
    target: TargetScaler,
    /// Mean training loss per epoch, standardized target units.
    loss_curve: Vec<f64>,
}

impl MlpModel {
    /// Freshly initialized, untrained network.
    pub fn init(n_features: usize, config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::default();
        let mut rng = seed::rng(seed::derive(seed, &[0]));
        let net = Stack::new(&mut store, "mlp", n_features, &config, &mut rng);
        Ok(MlpModel {
            config,
            n_features,
            store,
            net,
            target: TargetScaler { mean: 0.0, std: 1.0 },
            loss_curve: Vec::new(),
        })
    }

    pub fn loss_curve(&self) -> &[f64] {
        &self.loss_curve
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// MSE against `y` in the network's output units, with gradients.
    pub fn objective(&self, x: &Matrix, y: &[f64], mode: Mode) -> Result<(f64, Gradients)> {
        objective(&self.net, &self.store, x, y, mode)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_width(x, self.n_features)?;
        Ok(self.target.unscale(&predict_scaled(&self.net, &self.store, x)?))
    }
}

pub fn train_mlp(x: &Matrix, y: &[f64], config: &MlpConfig, seed: u64) -> Result<MlpModel> {
    check_training_data(x, y)?;
    let mut model = MlpModel::init(x.cols(), config.clone(), seed)?;
    model.target = TargetScaler::fit(y);
    let ys = model.target.scale(y);
    let mut rng = seed::rng(seed::derive(seed, &[1]));
    model.loss_curve = fit(&model.net, &mut model.store, x, &ys, config, &mut rng)?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMlpModel {
    config: MlpConfig,
    n_features: usize,
    store: ParamStore,
    net: Gated,
    target: TargetScaler,
    loss_curve: Vec<f64>,
}

impl AttentionMlpModel {
    pub fn init(n_features: usize, config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::default();
        let mut rng = seed::rng(seed::derive(seed, &[0]));
        let gate_in = Linear::new(&mut store, "gate.in", n_features, config.attention_hidden, &mut rng);
        let gate_out = Linear::new(&mut store, "gate.out", config.attention_hidden, n_features, &mut rng);
        let body = Stack::new(&mut store, "mlp", n_features, &config, &mut rng);
        Ok(AttentionMlpModel {
            config,
            n_features,
            store,
            net: Gated {
                gate_in,
                gate_out,
                body,
            },
            target: TargetScaler { mean: 0.0, std: 1.0 },
            loss_curve: Vec::new(),
        })
    }

    pub fn loss_curve(&self) -> &[f64] {
        &self.loss_curve
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn objective(&self, x: &Matrix, y: &[f64], mode: Mode) -> Result<(f64, Gradients)> {
        objective(&self.net, &self.store, x, y, mode)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_width(x, self.n_features)?;
        Ok(self.target.unscale(&predict_scaled(&self.net, &self.store, x)?))
    }

    /// Per-row attention gates α, each in (0, 1).
    pub fn gates(&self, x: &Matrix) -> Result<Matrix> {
        check_width(x, self.n_features)?;
        let mut g = Graph::new(&self.store);
        let xi = g.input(x.clone());
        let a = self.net.gate(&mut g, xi)?;
        Ok(g.value(a).clone())
    }

    /// Mean gate vector ᾱ over the rows of `x` (feature-importance readout).
    pub fn mean_gate(&self, x: &Matrix) -> Result<Vec<f64>> {
        let a = self.gates(x)?;
        Ok((0..a.cols())
            .map(|c| a.column(c).iter().sum::<f64>() / a.rows() as f64)
            .collect())
    }
}

pub fn train_attention_mlp(x: &Matrix, y: &[f64], config: &MlpConfig, seed: u64) -> Result<AttentionMlpModel> {
    check_training_data(x, y)?;
    let mut model = AttentionMlpModel::init(x.cols(), config.clone(), seed)?;
    model.target = TargetScaler::fit(y);
    let ys = model.target.scale(y);
    let mut rng = seed::rng(seed::derive(seed, &[1]));
    model.loss_curve = fit(&model.net, &mut model.store, x, &ys, config, &mut rng)?;
    Ok(model)
}

pub(crate) fn check_width(x: &Matrix, d: usize) -> Result<()> {
    if x.cols() != d {
        return Err(Error::Shape {
            op: "predict",
            left: x.shape(),
            right: (x.rows(), d),
        });
    }
    Ok(())
}
