//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the backward sweep is a single reverse walk.

use serde::{Deserialize, Serialize};

use super::sparsemax::sparsemax_into;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Index of a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    /// Buffers such as running normalization statistics are not trained.
    pub trainable: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Matrix, trainable: bool) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
            trainable,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.params
            .iter()
            .enumerate()
            .filter(|(_, p)| p.trainable)
            .map(|(i, _)| ParamId(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Normalization statistics captured for the backward pass.
#[derive(Debug, Clone)]
struct NormCache {
    /// Normalized input x̂.
    xhat: Matrix,
    /// Per row-group `(start, end, inv_std per column)`.
    groups: Vec<(usize, usize, Vec<f64>)>,
    /// Statistics were constants (running averages), not batch functions.
    frozen: bool,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Dropout(Var, Matrix),
    Norm {
        x: Var,
        gamma: Var,
        beta: Var,
        cache: NormCache,
    },
    Sparsemax(Var),
    Mse(Var, Vec<f64>),
    Entropy(Var),
}

struct Node {
    value: Matrix,
    op: Op,
}

const ENTROPY_EPS: f64 = 1e-15;

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

/// Per-parameter gradients, `None` for parameters the loss does not touch.
pub type Gradients = Vec<Option<Matrix>>;

/// Per-column mean and variance of one batch-norm row group.
pub type GroupStats = (Vec<f64>, Vec<f64>);

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let p = &self.store.params[id.0];
        let op = if p.trainable { Op::Param(id) } else { Op::Input };
        self.push(p.value.clone(), op)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Adds a `1×k` row vector to every row of an `n×k` matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xs, bs) = (self.value(x).shape(), self.value(b).shape());
        if bs.0 != 1 || bs.1 != xs.1 {
            return Err(Error::Shape {
                op: "add_bias",
                left: xs,
                right: bs,
            });
        }
        let mut v = self.value(x).clone();
        let bias = self.value(b).row(0).to_vec();
        for r in 0..v.rows() {
            for (o, b) in v.row_mut(r).iter_mut().zip(&bias) {
                *o += b;
            }
        }
        Ok(self.push(v, Op::AddBias(x, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut v = self.value(a).clone();
        for (o, r) in v.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += r;
        }
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let mut v = self.value(a).clone();
        for (o, r) in v.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= r;
        }
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// `scale · x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(x).map(|e| scale * e + shift);
        self.push(v, Op::Affine(x, scale))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| e.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| 1.0 / (1.0 + (-e).exp()));
        self.push(v, Op::Sigmoid(x))
    }

    /// Inverted dropout with a precomputed mask of 0 or 1/(1−p) entries.
    pub fn dropout(&mut self, x: Var, mask: Matrix) -> Result<Var> {
        if mask.shape() != self.value(x).shape() {
            return Err(Error::Shape {
                op: "dropout",
                left: self.value(x).shape(),
                right: mask.shape(),
            });
        }
        let mut v = self.value(x).clone();
        for (o, m) in v.data_mut().iter_mut().zip(mask.data()) {
            *o *= m;
        }
        Ok(self.push(v, Op::Dropout(x, mask)))
    }

    /// Batch normalization over row groups `[start, end)`, each normalized
    /// with its own mean and population variance.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        groups: &[(usize, usize)],
        eps: f64,
    ) -> Result<(Var, Vec<GroupStats>)> {
        let xv = self.value(x);
        let (n, d) = xv.shape();
        self.check_affine("batch_norm", x, gamma, beta)?;
        let mut xhat = Matrix::zeros(n, d);
        let mut cache_groups = Vec::with_capacity(groups.len());
        let mut stats = Vec::with_capacity(groups.len());
        for &(s, e) in groups {
            let m = (e - s) as f64;
            let mut mean = vec![0.0; d];
            for r in s..e {
                for (acc, v) in mean.iter_mut().zip(xv.row(r)) {
                    *acc += v;
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            let mut var = vec![0.0; d];
            for r in s..e {
                for ((acc, v), mu) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
            let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            for r in s..e {
                for c in 0..d {
                    xhat.set(r, c, (xv.get(r, c) - mean[c]) * inv[c]);
                }
            }
            cache_groups.push((s, e, inv));
            stats.push((mean, var));
        }
        let v = self.scale_shift(&xhat, gamma, beta);
        let out = self.push(
            v,
            Op::Norm {
                x,
                gamma,
                beta,
                cache: NormCache {
                    xhat,
                    groups: cache_groups,
                    frozen: false,
                },
            },
        );
        Ok((out, stats))
    }

    /// Normalization with fixed statistics (inference, or frozen checks).
    pub fn frozen_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        self.check_affine("frozen_norm", x, gamma, beta)?;
        let xv = self.value(x);
        let (n, d) = xv.shape();
        let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = Matrix::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                xhat.set(r, c, (xv.get(r, c) - mean[c]) * inv[c]);
            }
        }
        let v = self.scale_shift(&xhat, gamma, beta);
        Ok(self.push(
            v,
            Op::Norm {
                x,
                gamma,
                beta,
                cache: NormCache {
                    xhat,
                    groups: vec![(0, n, inv)],
                    frozen: true,
                },
            },
        ))
    }

    fn check_affine(&self, op: &'static str, x: Var, gamma: Var, beta: Var) -> Result<()> {
        let d = self.value(x).cols();
        for p in [gamma, beta] {
            let s = self.value(p).shape();
            if s != (1, d) {
                return Err(Error::Shape {
                    op,
                    left: self.value(x).shape(),
                    right: s,
                });
            }
        }
        Ok(())
    }

    fn scale_shift(&self, xhat: &Matrix, gamma: Var, beta: Var) -> Matrix {
        let g = self.value(gamma).row(0);
        let b = self.value(beta).row(0);
        let mut v = xhat.clone();
        for r in 0..v.rows() {
            for ((o, g), b) in v.row_mut(r).iter_mut().zip(g).zip(b) {
                *o = *o * g + b;
            }
        }
        v
    }

    /// Row-wise sparsemax.
    pub fn sparsemax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut v = Matrix::zeros(xv.rows(), xv.cols());
        for r in 0..xv.rows() {
            sparsemax_into(xv.row(r), v.row_mut(r));
        }
        self.push(v, Op::Sparsemax(x))
    }

    /// Mean squared error of an `n×1` prediction against `target`; `1×1`.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.cols() != 1 || p.rows() != target.len() {
            return Err(Error::Shape {
                op: "mse",
                left: p.shape(),
                right: (target.len(), 1),
            });
        }
        let l = p
            .data()
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / target.len() as f64;
        Ok(self.push(Matrix::filled(1, 1, l), Op::Mse(pred, target.to_vec())))
    }

    /// Mean over rows of the Shannon entropy `Σⱼ −m ln(m + ε)`; `1×1`.
    pub fn entropy(&mut self, m: Var) -> Var {
        let mv = self.value(m);
        let total: f64 = mv.data().iter().map(|&p| -p * (p + ENTROPY_EPS).ln()).sum();
        let l = total / mv.rows() as f64;
        self.push(Matrix::filled(1, 1, l), Op::Entropy(m))
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).get(0, 0)
    }

    /// Gradients of the `1×1` node `loss` with respect to every trainable
    /// parameter that was read into the graph.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                left: self.value(loss).shape(),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out: Gradients = vec![None; self.store.len()];

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => accumulate(&mut out[id.0], g),
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b))?;
                    let db = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::AddBias(x, b) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads[b.0], db);
                    accumulate(&mut grads[x.0], g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    let da = hadamard(&g, self.value(*b));
                    let db = hadamard(&g, self.value(*a));
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::Affine(x, scale) => accumulate(&mut grads[x.0], g.map(|v| v * scale)),
                Op::Relu(x) => {
                    let mut d = g;
                    for (o, xv) in d.data_mut().iter_mut().zip(self.value(*x).data()) {
                        if *xv <= 0.0 {
                            *o = 0.0;
                        }
                    }
                    accumulate(&mut grads[x.0], d);
                }
                Op::Sigmoid(x) => {
                    let mut d = g;
                    for (o, s) in d.data_mut().iter_mut().zip(node.value.data()) {
                        *o *= s * (1.0 - s);
                    }
                    accumulate(&mut grads[x.0], d);
                }
                Op::Dropout(x, mask) => accumulate(&mut grads[x.0], hadamard(&g, mask)),
                Op::Norm {
                    x,
                    gamma,
                    beta,
                    cache,
                } => {
                    let (dx, dgamma, dbeta) = norm_backward(&g, self.value(*gamma), cache);
                    accumulate(&mut grads[gamma.0], dgamma);
                    accumulate(&mut grads[beta.0], dbeta);
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Sparsemax(x) => {
                    let mut d = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let out = node.value.row(r);
                        let gr = g.row(r);
                        let (sum, k) = out
                            .iter()
                            .zip(gr)
                            .filter(|(o, _)| **o > 0.0)
                            .fold((0.0, 0usize), |(s, k), (_, g)| (s + g, k + 1));
                        let mean = sum / k.max(1) as f64;
                        for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                            if out[c] > 0.0 {
                                *dv = gr[c] - mean;
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], d);
                }
                Op::Mse(pred, target) => {
                    let up = g.get(0, 0);
                    let p = self.value(*pred);
                    let n = target.len() as f64;
                    let d = Matrix::from_vec(
                        p.rows(),
                        1,
                        p.data()
                            .iter()
                            .zip(target)
                            .map(|(a, b)| 2.0 * (a - b) / n * up)
                            .collect(),
                    )?;
                    accumulate(&mut grads[pred.0], d);
                }
                Op::Entropy(m) => {
                    let up = g.get(0, 0);
                    let mv = self.value(*m);
                    let n = mv.rows() as f64;
                    let d = mv.map(|p| {
                        -((p + ENTROPY_EPS).ln() + p / (p + ENTROPY_EPS)) / n * up
                    });
                    accumulate(&mut grads[m.0], d);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
        None => *slot = Some(g),
    }
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o *= v;
    }
    out
}

fn norm_backward(g: &Matrix, gamma: &Matrix, cache: &NormCache) -> (Matrix, Matrix, Matrix) {
    let (n, d) = g.shape();
    let gamma = gamma.row(0);
    let mut dgamma = Matrix::zeros(1, d);
    let mut dbeta = Matrix::zeros(1, d);
    for r in 0..n {
        for c in 0..d {
            dgamma.data_mut()[c] += g.get(r, c) * cache.xhat.get(r, c);
            dbeta.data_mut()[c] += g.get(r, c);
        }
    }
    let mut dx = Matrix::zeros(n, d);
    for (s, e, inv) in &cache.groups {
        if cache.frozen {
            for r in *s..*e {
                for c in 0..d {
                    dx.set(r, c, g.get(r, c) * gamma[c] * inv[c]);
                }
            }
            continue;
        }
        let m = (e - s) as f64;
        for c in 0..d {
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for r in *s..*e {
                let dxhat = g.get(r, c) * gamma[c];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * cache.xhat.get(r, c);
            }
            for r in *s..*e {
                let dxhat = g.get(r, c) * gamma[c];
                let v = inv[c] / m * (m * dxhat - sum_dxhat - cache.xhat.get(r, c) * sum_dxhat_xhat);
                dx.set(r, c, v);
            }
        }
    }
    (dx, dgamma, dbeta)
}
