//! TabNet-lite: sequential sparse feature selection.
//!
//! Each decision step computes a sparsemax mask from the input, scaled by a
//! prior that shrinks for features already used (`P ← P ⊙ (γ − M)`). The
//! masked input passes through a small feature transformer and the step
//! outputs are summed into a linear head.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, ParamStore, Var};
use super::layers::{GhostBatchNorm, Linear, Mode, Pass};
use super::mlp::check_width;
use super::optim::Adam;
use super::train::{check_training_data, objective, predict_scaled, run_epoch, Network, TargetScaler};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TabNetConfig {
    pub n_steps: usize,
    /// Relaxation γ of the prior update.
    pub gamma: f64,
    /// Weight λ of the mask-entropy penalty.
    pub sparsity: f64,
    /// Width of each step's feature transformer.
    pub step_dim: usize,
    pub batch_size: usize,
    pub virtual_batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// Fraction of training rows held out for early stopping.
    pub validation_fraction: f64,
    pub momentum: f64,
}

impl Default for TabNetConfig {
    fn default() -> Self {
        TabNetConfig {
            n_steps: 3,
            gamma: 1.3,
            sparsity: 1e-3,
            step_dim: 32,
            batch_size: 256,
            virtual_batch_size: 128,
            max_epochs: 120,
            patience: 30,
            learning_rate: 0.02,
            validation_fraction: 0.15,
            momentum: 0.02,
        }
    }
}

impl TabNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.step_dim == 0 || self.batch_size == 0 || self.virtual_batch_size == 0 {
            return Err(Error::invalid(
                "n_steps, step_dim, batch_size and virtual_batch_size must be positive",
            ));
        }
        if self.virtual_batch_size > self.batch_size {
            return Err(Error::invalid("virtual_batch_size must not exceed batch_size"));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::invalid("max_epochs and patience must be positive"));
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma must be >= 1"));
        }
        if !(self.sparsity >= 0.0 && self.sparsity.is_finite()) {
            return Err(Error::invalid("sparsity must be >= 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation_fraction must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Prior after one step: `P ⊙ (γ − M)`, elementwise.
pub fn update_prior(prior: &Matrix, mask: &Matrix, gamma: f64) -> Result<Matrix> {
    if prior.shape() != mask.shape() {
        return Err(Error::Shape {
            op: "update_prior",
            left: prior.shape(),
            right: mask.shape(),
        });
    }
    let data = prior.data().iter().zip(mask.data()).map(|(p, m)| p * (gamma - m)).collect();
    Matrix::from_vec(prior.rows(), prior.cols(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Step {
    attention: Linear,
    attention_bn: GhostBatchNorm,
    fc1: Linear,
    bn1: GhostBatchNorm,
    fc2: Linear,
    bn2: GhostBatchNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Net {
    steps: Vec<Step>,
    head: Linear,
    gamma: f64,
    sparsity: f64,
}

struct Trace {
    pred: Var,
    masks: Vec<Var>,
    outputs: Vec<Var>,
}

impl Net {
    fn new(store: &mut ParamStore, d: usize, cfg: &TabNetConfig, rng: &mut Rng) -> Self {
        let (vb, mom, w) = (cfg.virtual_batch_size, cfg.momentum, cfg.step_dim);
        let steps = (0..cfg.n_steps)
            .map(|t| Step {
                attention: Linear::new(store, &format!("step{t}.attention"), d, d, rng),
                attention_bn: GhostBatchNorm::new(store, &format!("step{t}.attention_bn"), d, vb, mom),
                fc1: Linear::new(store, &format!("step{t}.fc1"), d, w, rng),
                bn1: GhostBatchNorm::new(store, &format!("step{t}.bn1"), w, vb, mom),
                fc2: Linear::new(store, &format!("step{t}.fc2"), w, w, rng),
                bn2: GhostBatchNorm::new(store, &format!("step{t}.bn2"), w, vb, mom),
            })
            .collect();
        Net {
            steps,
            head: Linear::new(store, "head", w, 1, rng),
            gamma: cfg.gamma,
            sparsity: cfg.sparsity,
        }
    }

    fn trace(&self, g: &mut Graph, x: Var, pass: &mut Pass) -> Result<Trace> {
        let (n, d) = g.value(x).shape();
        let mut prior = g.input(Matrix::filled(n, d, 1.0));
        let mut masks = Vec::with_capacity(self.steps.len());
        let mut outputs = Vec::with_capacity(self.steps.len());
        let mut agg: Option<Var> = None;
        for step in &self.steps {
            let a = step.attention.forward(g, x)?;
            let a = step.attention_bn.forward(g, a, pass)?;
            let a = g.mul(a, prior)?;
            let mask = g.sparsemax(a);
            let relax = g.affine(mask, -1.0, self.gamma);
            prior = g.mul(prior, relax)?;

            let h = g.mul(x, mask)?;
            let h = step.fc1.forward(g, h)?;
            let h = step.bn1.forward(g, h, pass)?;
            let h = g.relu(h);
            let h = step.fc2.forward(g, h)?;
            let h = step.bn2.forward(g, h, pass)?;
            let h = g.relu(h);
            agg = Some(match agg {
                None => h,
                Some(s) => g.add(s, h)?,
            });
            masks.push(mask);
            outputs.push(h);
        }
        let pred = self.head.forward(g, agg.expect("at least one step"))?;
        Ok(Trace { pred, masks, outputs })
    }
}

impl Network for Net {
    fn predict_var(&self, g: &mut Graph, x: Var, pass: &mut Pass) -> Result<Var> {
        Ok(self.trace(g, x, pass)?.pred)
    }

    fn loss(&self, g: &mut Graph, x: Var, y: &[f64], pass: &mut Pass) -> Result<Var> {
        let t = self.trace(g, x, pass)?;
        let mut loss = g.mse(t.pred, y)?;
        if self.sparsity > 0.0 {
            let k = self.sparsity / t.masks.len() as f64;
            for m in t.masks {
                let e = g.entropy(m);
                let e = g.affine(e, k, 0.0);
                loss = g.add(loss, e)?;
            }
        }
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabNetModel {
    config: TabNetConfig,
    n_features: usize,
    store: ParamStore,
    net: Net,
    target: TargetScaler,
    loss_curve: Vec<f64>,
    validation_curve: Vec<f64>,
    best_epoch: usize,
}

impl TabNetModel {
    pub fn init(n_features: usize, config: TabNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_features == 0 {
            return Err(Error::invalid("no features"));
        }
        let mut store = ParamStore::default();
        let mut rng = seed::rng(seed::derive(seed, &[0]));
        let net = Net::new(&mut store, n_features, &config, &mut rng);
        Ok(TabNetModel {
            config,
            n_features,
            store,
            net,
            target: TargetScaler { mean: 0.0, std: 1.0 },
            loss_curve: Vec::new(),
            validation_curve: Vec::new(),
            best_epoch: 0,
        })
    }

    pub fn config(&self) -> &TabNetConfig {
        &self.config
    }

    pub fn loss_curve(&self) -> &[f64] {
        &self.loss_curve
    }

    /// Held-out loss per epoch; empty when training had too few rows to
    /// hold any out.
    pub fn validation_curve(&self) -> &[f64] {
        &self.validation_curve
    }

    /// Epoch (1-based) whose parameters were kept.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Training objective (MSE plus entropy penalty) in the network's output
    /// units, with gradients.
    pub fn objective(&self, x: &Matrix, y: &[f64], mode: Mode) -> Result<(f64, Gradients)> {
        objective(&self.net, &self.store, x, y, mode)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_width(x, self.n_features)?;
        Ok(self.target.unscale(&predict_scaled(&self.net, &self.store, x)?))
    }

    fn eval_trace(&self, x: &Matrix) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
        check_width(x, self.n_features)?;
        let mut rng = seed::rng(0);
        let mut pass = Pass::new(Mode::EVAL, &mut rng);
        let mut g = Graph::new(&self.store);
        let xi = g.input(x.clone());
        let t = self.net.trace(&mut g, xi, &mut pass)?;
        let masks = t.masks.iter().map(|&m| g.value(m).clone()).collect();
        let outputs = t.outputs.iter().map(|&o| g.value(o).clone()).collect();
        Ok((masks, outputs))
    }

    /// Per-step masks `M_t`, each `n×d` with rows on the simplex.
    pub fn masks(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        Ok(self.eval_trace(x)?.0)
    }

    /// Aggregate importance `Σ_t η_t M_t` summed over rows and normalized to
    /// sum to one, where `η_t` is the row sum of step `t`'s output.
    pub fn feature_importance(&self, x: &Matrix) -> Result<Vec<f64>> {
        let (masks, outputs) = self.eval_trace(x)?;
        let mut imp = vec![0.0; self.n_features];
        for (m, o) in masks.iter().zip(&outputs) {
            for r in 0..m.rows() {
                let eta: f64 = o.row(r).iter().sum();
                for (acc, v) in imp.iter_mut().zip(m.row(r)) {
                    *acc += eta * v;
                }
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        } else {
            imp.fill(1.0 / self.n_features as f64);
        }
        Ok(imp)
    }
}

fn holdout(n: usize, fraction: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let n_val = (fraction * n as f64).round() as usize;
    if n_val == 0 || n - n_val.min(n) < 2 {
        return ((0..n).collect(), Vec::new());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let (val, train) = order.split_at(n_val);
    let (mut train, mut val) = (train.to_vec(), val.to_vec());
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Trains with early stopping on a random held-out slice of `x`; the
/// parameters from the best validation epoch are restored at the end.
pub fn train_tabnet(x: &Matrix, y: &[f64], config: &TabNetConfig, seed: u64) -> Result<TabNetModel> {
    check_training_data(x, y)?;
    let mut model = TabNetModel::init(x.cols(), config.clone(), seed)?;
    model.target = TargetScaler::fit(y);
    let ys = model.target.scale(y);

    let mut split_rng = seed::rng(seed::derive(seed, &[2]));
    let (train_idx, val_idx) = holdout(y.len(), config.validation_fraction, &mut split_rng);
    let xt = x.select_rows(&train_idx);
    let yt: Vec<f64> = train_idx.iter().map(|&i| ys[i]).collect();
    let xv = x.select_rows(&val_idx);
    let yv: Vec<f64> = val_idx.iter().map(|&i| ys[i]).collect();

    let mut rng = seed::rng(seed::derive(seed, &[1]));
    let mut adam = Adam::new(config.learning_rate, model.store.len());
    let mut best = (f64::INFINITY, model.store.clone(), 0usize);
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        let train_loss = run_epoch(
            &model.net,
            &mut model.store,
            &mut adam,
            &xt,
            &yt,
            config.batch_size,
            &mut rng,
            epoch,
        )?;
        model.loss_curve.push(train_loss);
        let monitored = if yv.is_empty() {
            train_loss
        } else {
            let p = predict_scaled(&model.net, &model.store, &xv)?;
            let l = p.iter().zip(&yv).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / yv.len() as f64;
            model.validation_curve.push(l);
            l
        };
        if !monitored.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        if monitored < best.0 {
            best = (monitored, model.store.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                log::debug!("tabnet early stop at epoch {epoch}, best {}", best.2);
                break;
            }
        }
    }
    model.store = best.1;
    model.best_epoch = best.2;
    Ok(model)
}
