//! Regression and correlation metrics.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DEMOGRAPHIC_COLUMN};
use crate::demographics::ProfileId;
use crate::error::{Error, Result};

fn check_pair(y: &[f64], y_hat: &[f64], min_len: usize) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            y.len(),
            y_hat.len()
        )));
    }
    if y.len() < min_len {
        return Err(Error::invalid(format!(
            "need at least {min_len} values, got {}",
            y.len()
        )));
    }
    if !y.iter().chain(y_hat).all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite value"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat, 1)?;
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat, 1)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat, 1)?;
    let m = mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("R² of a constant target".into()));
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Pearson linear correlation coefficient.
pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2)?;
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedMetric("PLCC of a constant vector".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties sharing the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn has_ties(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| w[0] == w[1])
}

/// Spearman rank correlation. Without ties this is `1 − 6Σd²/(N(N²−1))`;
/// with ties it is the Pearson correlation of average ranks.
pub fn srcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2)?;
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    if has_ties(a) || has_ties(b) {
        return plcc(&ra, &rb).map_err(|_| Error::UndefinedMetric("SRCC of an all-tied vector".into()));
    }
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub plcc: f64,
    pub srcc: f64,
    pub n: usize,
}

impl MetricBlock {
    pub fn compute(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        Ok(MetricBlock {
            rmse: rmse(y, y_hat)?,
            mae: mae(y, y_hat)?,
            r2: r2(y, y_hat)?,
            plcc: plcc(y, y_hat)?,
            srcc: srcc(y, y_hat)?,
            n: y.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicCorrelation {
    pub demographic: String,
    pub n: usize,
    pub plcc: f64,
}

/// Per-demographic Pearson correlation between `feature` and MOS. Known
/// profiles come first in profile order, then any other labels in order of
/// first appearance.
pub fn correlation_by_demographic(ds: &Dataset, feature: &str) -> Result<Vec<DemographicCorrelation>> {
    if !ds.has_column(DEMOGRAPHIC_COLUMN) {
        return Err(Error::SchemaMismatch(format!(
            "dataset has no `{DEMOGRAPHIC_COLUMN}` column"
        )));
    }
    let values = ds.numeric_column(feature)?;
    let mos = ds.targets();

    let mut labels: Vec<String> = ProfileId::ALL.iter().map(|p| p.as_str().to_string()).collect();
    for r in ds.rows() {
        let l = r.demographic.as_deref().unwrap_or_default();
        if !labels.iter().any(|x| x == l) {
            labels.push(l.to_string());
        }
    }
    let mut out = Vec::new();
    for label in labels {
        let (xs, ys): (Vec<f64>, Vec<f64>) = ds
            .rows()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.demographic.as_deref() == Some(label.as_str()))
            .map(|(i, _)| (values[i], mos[i]))
            .unzip();
        if xs.is_empty() {
            continue;
        }
        let r = plcc(&xs, &ys)
            .map_err(|e| Error::UndefinedMetric(format!("demographic `{label}`: {e}")))?;
        out.push(DemographicCorrelation {
            demographic: label,
            n: xs.len(),
            plcc: r,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let y = [1.0, 4.0, 2.0, 8.0];
        let b = MetricBlock::compute(&y, &y).unwrap();
        assert_eq!((b.rmse, b.mae, b.r2, b.plcc, b.srcc), (0.0, 0.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn swapped_pair() {
        let (y, p) = ([0.0, 10.0], [10.0, 0.0]);
        assert_eq!(rmse(&y, &p).unwrap(), 10.0);
        assert_eq!(mae(&y, &p).unwrap(), 10.0);
        assert_eq!(r2(&y, &p).unwrap(), -3.0);
    }

    #[test]
    fn mean_prediction_has_zero_r2() {
        let y = [1.0, 2.0, 6.0];
        assert_eq!(r2(&y, &[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(
            r2(&[2.0, 2.0], &[1.0, 3.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn pearson_cases() {
        let a = [1.0, 3.0, 2.0, 7.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((plcc(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((plcc(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            plcc(&a, &[1.0; 4]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(plcc(&[1.0], &[2.0]).is_err());
        assert!(plcc(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_cases() {
        let a = [0.3, -1.0, 2.5, 4.0, 1.1];
        let b: Vec<f64> = a.iter().map(|v: &f64| v.exp()).collect();
        assert_eq!(srcc(&a, &b).unwrap(), 1.0);
        let rev: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(srcc(&a, &rev).unwrap(), -1.0);
        assert!(matches!(
            srcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn spearman_with_ties_uses_average_ranks() {
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(average_ranks(&[5.0, 3.0, 5.0, 5.0]), vec![3.0, 1.0, 3.0, 3.0]);
        // Pearson of [1.5,1.5,3] and [1,2,3], evaluated by hand:
        // deviations (-0.5,-0.5,1) and (-1,0,1); cov 1.5; norms sqrt(1.5)·sqrt(2).
        let expected = 1.5 / (1.5f64.sqrt() * 2f64.sqrt());
        let got = srcc(&[1.0, 1.0, 2.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn hand_computed_three_element_values() {
        let y = [1.0, 2.0, 3.0];
        let p = [1.0, 3.0, 2.0];
        assert!((rmse(&y, &p).unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((mae(&y, &p).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((r2(&y, &p).unwrap() - 0.0).abs() < 1e-15);
        assert!((plcc(&y, &p).unwrap() - 0.5).abs() < 1e-15);
        assert!((srcc(&y, &p).unwrap() - 0.5).abs() < 1e-15);
    }
}
