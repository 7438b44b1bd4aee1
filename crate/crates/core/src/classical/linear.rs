//! Ordinary least squares via the normal equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearParams {
    /// Diagonal jitter added to the Gram matrix when it is not numerically
    /// positive definite.
    pub ridge_jitter: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams { ridge_jitter: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict_row(x.row(r))).collect()
    }
}

/// In-place Cholesky factor (lower). Fails when a pivot is not clearly
/// positive relative to the largest diagonal entry.
fn cholesky(a: &Matrix) -> Option<Matrix> {
    let d = a.rows();
    let max_diag = (0..d).map(|i| a.get(i, i)).fold(0.0f64, f64::max);
    let floor = max_diag * 1e-13;
    let mut l = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l.get(i, k) * l.get(j, k)).sum();
            if i == j {
                let pivot = a.get(i, i) - s;
                if pivot.is_nan() || pivot <= floor || !pivot.is_finite() {
                    return None;
                }
                l.set(i, i, pivot.sqrt());
            } else {
                l.set(i, j, (a.get(i, j) - s) / l.get(j, j));
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let d = b.len();
    let mut z = vec![0.0; d];
    for i in 0..d {
        let s: f64 = (0..i).map(|k| l.get(i, k) * z[k]).sum();
        z[i] = (b[i] - s) / l.get(i, i);
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let s: f64 = (i + 1..d).map(|k| l.get(k, i) * x[k]).sum();
        x[i] = (z[i] - s) / l.get(i, i);
    }
    x
}

pub fn fit_linear(x: &Matrix, y: &[f64], params: LinearParams) -> Result<LinearModel> {
    let (n, d) = x.shape();
    if n != y.len() {
        return Err(Error::invalid("feature rows and targets differ in length"));
    }
    if n < d + 1 {
        return Err(Error::invalid(format!("need at least {} rows for {d} features, got {n}", d + 1)));
    }
    // Centering absorbs the intercept.
    let x_mean: Vec<f64> = (0..d).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xc = x.clone();
    for r in 0..n {
        for (v, m) in xc.row_mut(r).iter_mut().zip(&x_mean) {
            *v -= m;
        }
    }
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let gram = xc.t_matmul(&xc)?;
    let rhs: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| xc.get(i, j) * yc[i]).sum())
        .collect();

    let l = match cholesky(&gram) {
        Some(l) => l,
        None => {
            let mut g = gram.clone();
            for i in 0..d {
                g.set(i, i, g.get(i, i) + params.ridge_jitter);
            }
            cholesky(&g).ok_or_else(|| {
                Error::Numerical("normal equations singular even after ridge jitter".into())
            })?
        }
    };
    let coef = cholesky_solve(&l, &rhs);
    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel { coef, intercept })
}
