//! Experiment configuration, read from TOML.
//!
//! Every key is optional. Unknown keys are rejected so that typos fail loudly
//! instead of silently falling back to a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demographics::{AugmentationConfig, ProfileSet, WeightOverride};
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelParams};
use crate::preprocess::{FeatureOptions, SplitMode, SplitSpec};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// CSV to ingest. When absent, a synthetic base dataset is generated.
    pub path: Option<PathBuf>,
    /// Rows to generate.
    pub n: usize,
    /// Generator seed; defaults to the global seed.
    pub seed: Option<u64>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            n: 450,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub noise_sigma: f64,
    pub adjustment_scale: f64,
    pub seed: Option<u64>,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let d = AugmentationConfig::default();
        AugmentSection {
            noise_sigma: d.noise_sigma,
            adjustment_scale: d.adjustment_scale,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub test_fraction: f64,
    pub mode: SplitMode,
    pub seed: Option<u64>,
}

impl Default for SplitSection {
    fn default() -> Self {
        let d = SplitSpec::default();
        SplitSection {
            test_fraction: d.test_fraction,
            mode: d.mode,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub roster: Vec<ModelKind>,
    /// Leave the encoded demographic label out of the augmented feature set.
    pub exclude_demographic_feature: bool,
    /// Train roster models concurrently. Results do not depend on this.
    pub parallel: bool,
    pub data: DataSection,
    pub augment: AugmentSection,
    pub split: SplitSection,
    pub profiles: BTreeMap<String, WeightOverride>,
    pub models: ModelParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            out_dir: PathBuf::from("out"),
            roster: ModelKind::ALL.to_vec(),
            exclude_demographic_feature: false,
            parallel: true,
            data: DataSection::default(),
            augment: AugmentSection::default(),
            split: SplitSection::default(),
            profiles: BTreeMap::new(),
            models: ModelParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads and parses a config file. Relative `data.path` values are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(p), Some(dir)) = (&cfg.data.path, path.parent()) {
            if p.is_relative() {
                cfg.data.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.roster.is_empty() {
            return Err(Error::Config("roster must name at least one model".into()));
        }
        for (i, k) in self.roster.iter().enumerate() {
            if self.roster[..i].contains(k) {
                return Err(Error::Config(format!("model `{k}` listed twice in roster")));
            }
        }
        match &self.data.path {
            Some(p) if !p.is_file() => {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "data file not found"),
                ))
            }
            None if self.data.n == 0 => return Err(Error::Config("data.n must be >= 1".into())),
            _ => {}
        }
        self.augmentation()?.validate()?;
        let s = self.split_spec();
        if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
            return Err(Error::Config("split.test_fraction must be in (0, 1)".into()));
        }
        let m = &self.models;
        m.mlp.validate()?;
        m.attention_mlp.validate()?;
        m.tabnet.validate()?;
        if m.knn.k == 0 {
            return Err(Error::Config("models.knn.k must be >= 1".into()));
        }
        if m.random_forest.n_trees == 0 || m.gradient_boosting.n_stages == 0 {
            return Err(Error::Config("tree ensembles need at least one member".into()));
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or(self.seed)
    }

    pub fn augmentation(&self) -> Result<AugmentationConfig> {
        Ok(AugmentationConfig {
            noise_sigma: self.augment.noise_sigma,
            adjustment_scale: self.augment.adjustment_scale,
            seed: self
                .augment
                .seed
                .unwrap_or_else(|| seed::derive(self.seed, &[seed::tag("augment")])),
            profiles: ProfileSet::builtin().with_overrides(&self.profiles)?,
        })
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            test_fraction: self.split.test_fraction,
            mode: self.split.mode,
            seed: self
                .split
                .seed
                .unwrap_or_else(|| seed::derive(self.seed, &[seed::tag("split")])),
        }
    }

    pub fn feature_options(&self) -> FeatureOptions {
        FeatureOptions {
            include_demographic: !self.exclude_demographic_feature,
        }
    }

    /// Seed for one model's training, independent of roster order.
    pub fn model_seed(&self, kind: ModelKind) -> u64 {
        seed::derive(self.seed, &[seed::tag(kind.as_str())])
    }
}
