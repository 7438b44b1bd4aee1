//! Brute-force k-nearest-neighbour regression (Euclidean distance).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    x: Matrix,
    y: Vec<f64>,
    k: usize,
}

pub fn fit_knn(x: &Matrix, y: &[f64], params: KnnParams) -> Result<Knn> {
    if x.rows() != y.len() {
        return Err(Error::invalid("feature rows and targets differ in length"));
    }
    if params.k == 0 || params.k > y.len() {
        return Err(Error::invalid(format!(
            "k must be in 1..={}, got {}",
            y.len(),
            params.k
        )));
    }
    Ok(Knn {
        x: x.clone(),
        y: y.to_vec(),
        k: params.k,
    })
}

impl Knn {
    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of the k nearest training rows, ascending by (distance, index).
    pub fn neighbors(&self, q: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = (0..self.x.rows())
            .map(|i| {
                let dist: f64 = self.x.row(i).iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum();
                (dist, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_row(&self, q: &[f64]) -> f64 {
        let mut nn = self.neighbors(q);
        // Sum in training order so k = n reproduces mean(y) bit for bit.
        nn.sort_unstable();
        nn.iter().map(|&i| self.y[i]).sum::<f64>() / self.k as f64
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict_row(x.row(r))).collect()
    }
}
