//! Dataset → design matrix: label encoding, standardization, splitting.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, DEMOGRAPHIC_COLUMN};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Dense label → code map; codes follow first appearance in the fitting data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEncoder {
    pub column: String,
    pub labels: Vec<String>,
}

impl ColumnEncoder {
    pub fn fit<'a>(column: &str, values: impl IntoIterator<Item = &'a str>) -> Self {
        let mut labels: Vec<String> = Vec::new();
        for v in values {
            if !labels.iter().any(|l| l == v) {
                labels.push(v.to_string());
            }
        }
        ColumnEncoder {
            column: column.to_string(),
            labels,
        }
    }

    pub fn code(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Code reserved for labels unseen during fitting.
    pub fn overflow_code(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledColumn {
    pub column: String,
    pub mean: f64,
    /// Population standard deviation, always > 0.
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub columns: Vec<ScaledColumn>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// Encode the `demographic` column as a feature when present.
    pub include_demographic: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            include_demographic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum FeatureSource {
    Encoded(usize),
    Scaled(usize),
}

/// Fitted preprocessing state. Immutable once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    options: FeatureOptions,
    /// Non-meta (name, kind) pairs of the fitting schema.
    schema: Vec<(String, ColumnKind)>,
    encoders: Vec<ColumnEncoder>,
    scaler: StandardScaler,
    features: Vec<(String, FeatureSource)>,
    dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    /// Session group of each row (base session id when augmented).
    pub groups: Vec<u64>,
    pub warnings: Vec<String>,
}

fn predictive_schema(ds: &Dataset) -> Vec<(String, ColumnKind)> {
    ds.schema()
        .iter()
        .filter(|c| c.kind != ColumnKind::Meta)
        .map(|c| (c.name.clone(), c.kind))
        .collect()
}

impl Preprocessor {
    pub fn fit(train: &Dataset, options: FeatureOptions) -> Result<(Self, Vec<String>)> {
        if train.is_empty() {
            return Err(Error::invalid("cannot fit preprocessing on an empty dataset"));
        }
        let mut warnings = Vec::new();
        let mut encoders = Vec::new();
        let mut scaler = StandardScaler::default();
        let mut features = Vec::new();
        let mut dropped = Vec::new();
        for col in train.schema() {
            match col.kind {
                ColumnKind::Categorical => {
                    if col.name == DEMOGRAPHIC_COLUMN && !options.include_demographic {
                        continue;
                    }
                    let enc = ColumnEncoder::fit(
                        &col.name,
                        train
                            .rows()
                            .iter()
                            .map(|r| r.categorical(&col.name).unwrap_or_default()),
                    );
                    features.push((col.name.clone(), FeatureSource::Encoded(encoders.len())));
                    encoders.push(enc);
                }
                ColumnKind::Numeric => {
                    let values = train.numeric_column(&col.name)?;
                    let (mean, std) = mean_std(&values);
                    if std.is_nan() || std <= 0.0 || !std.is_finite() {
                        let msg = format!("dropping constant column `{}`", col.name);
                        log::warn!("{msg}");
                        warnings.push(msg);
                        dropped.push(col.name.clone());
                        continue;
                    }
                    features.push((col.name.clone(), FeatureSource::Scaled(scaler.columns.len())));
                    scaler.columns.push(ScaledColumn {
                        column: col.name.clone(),
                        mean,
                        std,
                    });
                }
                ColumnKind::Target | ColumnKind::Group | ColumnKind::Meta => {}
            }
        }
        if features.is_empty() {
            return Err(Error::invalid("no usable feature columns"));
        }
        Ok((
            Preprocessor {
                options,
                schema: predictive_schema(train),
                encoders,
                scaler,
                features,
                dropped,
            },
            warnings,
        ))
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn dropped_columns(&self) -> &[String] {
        &self.dropped
    }

    pub fn scaler(&self) -> &StandardScaler {
        &self.scaler
    }

    pub fn encoders(&self) -> &[ColumnEncoder] {
        &self.encoders
    }

    pub fn options(&self) -> FeatureOptions {
        self.options
    }

    pub fn transform(&self, ds: &Dataset) -> Result<DesignMatrix> {
        let schema = predictive_schema(ds);
        if schema != self.schema {
            return Err(Error::SchemaMismatch(format!(
                "dataset columns {:?} differ from fitted columns {:?}",
                schema.iter().map(|(n, _)| n).collect::<Vec<_>>(),
                self.schema.iter().map(|(n, _)| n).collect::<Vec<_>>()
            )));
        }
        let n = ds.len();
        let d = self.features.len();
        let mut x = Matrix::zeros(n, d);
        let mut warnings = Vec::new();
        for (j, (name, src)) in self.features.iter().enumerate() {
            match src {
                FeatureSource::Encoded(e) => {
                    let enc = &self.encoders[*e];
                    let mut unseen = BTreeSet::new();
                    for (i, r) in ds.rows().iter().enumerate() {
                        let label = r.categorical(name).unwrap_or_default();
                        let code = enc.code(label).unwrap_or_else(|| {
                            unseen.insert(label.to_string());
                            enc.overflow_code()
                        });
                        x.set(i, j, code as f64);
                    }
                    if !unseen.is_empty() {
                        let msg = format!(
                            "column `{name}`: unseen labels {unseen:?} mapped to code {}",
                            enc.overflow_code()
                        );
                        log::warn!("{msg}");
                        warnings.push(msg);
                    }
                }
                FeatureSource::Scaled(s) => {
                    let sc = &self.scaler.columns[*s];
                    for (i, r) in ds.rows().iter().enumerate() {
                        let v = r.session.numeric(name).expect("numeric column");
                        x.set(i, j, (v - sc.mean) / sc.std);
                    }
                }
            }
        }
        Ok(DesignMatrix {
            x,
            y: ds.targets(),
            feature_names: self.feature_names(),
            groups: ds.rows().iter().map(|r| r.group_id()).collect(),
            warnings,
        })
    }
}

pub fn fit_transform(train: &Dataset, options: FeatureOptions) -> Result<(DesignMatrix, Preprocessor)> {
    let (pre, mut warnings) = Preprocessor::fit(train, options)?;
    let mut dm = pre.transform(train)?;
    warnings.append(&mut dm.warnings);
    dm.warnings = warnings;
    Ok((dm, pre))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    GroupedBySession,
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub mode: SplitMode,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            mode: SplitMode::GroupedBySession,
            seed: 0,
        }
    }
}

/// Train/test partition. Grouped mode keeps every row of a base session on
/// one side; membership depends only on the set of groups and the seed.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::invalid("test_fraction must be in (0, 1)"));
    }
    if ds.len() < 5 {
        return Err(Error::invalid(format!(
            "need at least 5 rows to split, got {}",
            ds.len()
        )));
    }
    let mut rng = seed::rng(spec.seed);
    let test_idx: Vec<usize> = match spec.mode {
        SplitMode::GroupedBySession => {
            let mut groups: Vec<u64> = ds
                .rows()
                .iter()
                .map(|r| r.group_id())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if groups.len() < 2 {
                return Err(Error::invalid("need at least 2 session groups to split"));
            }
            groups.shuffle(&mut rng);
            let n_test = test_count(groups.len(), spec.test_fraction);
            let test: HashSet<u64> = groups[..n_test].iter().copied().collect();
            (0..ds.len())
                .filter(|&i| test.contains(&ds.rows()[i].group_id()))
                .collect()
        }
        SplitMode::Iid => {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(&mut rng);
            let n_test = test_count(ds.len(), spec.test_fraction);
            let mut t = idx[..n_test].to_vec();
            t.sort_unstable();
            t
        }
    };
    let in_test: HashSet<usize> = test_idx.iter().copied().collect();
    let train_idx: Vec<usize> = (0..ds.len()).filter(|i| !in_test.contains(i)).collect();
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

fn test_count(units: usize, fraction: f64) -> usize {
    ((units as f64 * fraction).round() as usize).clamp(1, units - 1)
}
