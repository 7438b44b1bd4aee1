//! The eight regressor kinds behind one type, and their JSON document form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classical::{
    fit_boosted, fit_forest, fit_knn, fit_linear, fit_tree, BoostParams, DecisionTree, ForestParams,
    GradientBoosting, Knn, KnnParams, LinearModel, LinearParams, RandomForest, TreeParams,
};
use crate::deep::{
    train_attention_mlp, train_mlp, train_tabnet, AttentionMlpModel, MlpConfig, MlpModel, TabNetConfig,
    TabNetModel,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::preprocess::Preprocessor;

/// Bumped whenever the serialized layout of [`ModelDocument`] changes.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearRegression,
    DecisionTree,
    RandomForest,
    GradientBoosting,
    Knn,
    Mlp,
    AttentionMlp,
    Tabnet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::LinearRegression,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
        ModelKind::Knn,
        ModelKind::Mlp,
        ModelKind::AttentionMlp,
        ModelKind::Tabnet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LinearRegression => "linear_regression",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosting => "gradient_boosting",
            ModelKind::Knn => "knn",
            ModelKind::Mlp => "mlp",
            ModelKind::AttentionMlp => "attention_mlp",
            ModelKind::Tabnet => "tabnet",
        }
    }

    pub fn is_deep(self) -> bool {
        matches!(self, ModelKind::Mlp | ModelKind::AttentionMlp | ModelKind::Tabnet)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = ModelKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::invalid(format!("unknown model `{s}` (expected one of {})", known.join(", ")))
            })
    }
}

/// Hyperparameters for every kind; the `[models.*]` config sections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub linear_regression: LinearParams,
    pub decision_tree: TreeParams,
    pub random_forest: ForestParams,
    pub gradient_boosting: BoostParams,
    pub knn: KnnParams,
    pub mlp: MlpConfig,
    pub attention_mlp: MlpConfig,
    pub tabnet: TabNetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "snake_case")]
pub enum RegressorModel {
    LinearRegression(LinearModel),
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    GradientBoosting(GradientBoosting),
    Knn(Knn),
    Mlp(MlpModel),
    AttentionMlp(AttentionMlpModel),
    Tabnet(TabNetModel),
}

impl RegressorModel {
    pub fn fit(kind: ModelKind, x: &Matrix, y: &[f64], params: &ModelParams, seed: u64) -> Result<Self> {
        Ok(match kind {
            ModelKind::LinearRegression => Self::LinearRegression(fit_linear(x, y, params.linear_regression)?),
            ModelKind::DecisionTree => Self::DecisionTree(fit_tree(x, y, params.decision_tree)?),
            ModelKind::RandomForest => Self::RandomForest(fit_forest(x, y, params.random_forest, seed)?),
            ModelKind::GradientBoosting => Self::GradientBoosting(fit_boosted(x, y, params.gradient_boosting)?),
            ModelKind::Knn => Self::Knn(fit_knn(x, y, params.knn)?),
            ModelKind::Mlp => Self::Mlp(train_mlp(x, y, &params.mlp, seed)?),
            ModelKind::AttentionMlp => Self::AttentionMlp(train_attention_mlp(x, y, &params.attention_mlp, seed)?),
            ModelKind::Tabnet => Self::Tabnet(train_tabnet(x, y, &params.tabnet, seed)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::LinearRegression(_) => ModelKind::LinearRegression,
            Self::DecisionTree(_) => ModelKind::DecisionTree,
            Self::RandomForest(_) => ModelKind::RandomForest,
            Self::GradientBoosting(_) => ModelKind::GradientBoosting,
            Self::Knn(_) => ModelKind::Knn,
            Self::Mlp(_) => ModelKind::Mlp,
            Self::AttentionMlp(_) => ModelKind::AttentionMlp,
            Self::Tabnet(_) => ModelKind::Tabnet,
        }
    }

    fn classical_width(&self) -> Option<usize> {
        match self {
            Self::LinearRegression(m) => Some(m.coef.len()),
            Self::DecisionTree(m) => Some(m.n_features()),
            Self::RandomForest(m) => Some(m.n_features()),
            Self::GradientBoosting(m) => Some(m.n_features()),
            Self::Knn(m) => Some(m.n_features()),
            _ => None,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if let Some(d) = self.classical_width() {
            if x.cols() != d {
                return Err(Error::Shape {
                    op: "predict",
                    left: x.shape(),
                    right: (x.rows(), d),
                });
            }
        }
        let p = match self {
            Self::LinearRegression(m) => m.predict(x),
            Self::DecisionTree(m) => m.predict(x),
            Self::RandomForest(m) => m.predict(x),
            Self::GradientBoosting(m) => m.predict(x),
            Self::Knn(m) => m.predict(x),
            Self::Mlp(m) => m.predict(x)?,
            Self::AttentionMlp(m) => m.predict(x)?,
            Self::Tabnet(m) => m.predict(x)?,
        };
        if let Some(i) = p.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "{} produced a non-finite prediction for row {i}",
                self.kind()
            )));
        }
        Ok(p)
    }
}

/// A trained model together with the preprocessing it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    /// Content hash of the dataset the model was trained on.
    pub training_data_hash: String,
    pub seed: u64,
    pub preprocessor: Preprocessor,
    pub model: RegressorModel,
}

impl ModelDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(MODEL_SCHEMA_VERSION)) {
            return Err(Error::SchemaMismatch(format!(
                "model document schema_version {version:?}, expected {MODEL_SCHEMA_VERSION}"
            )));
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
