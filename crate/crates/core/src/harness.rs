//! End-to-end experiment runs: load or generate, augment, split, fit every
//! roster model on both arms, and assemble the comparison report.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{generate_base_dataset, read_csv, Dataset};
use crate::demographics::augment_dataset;
use crate::error::{Error, Result};
use crate::metrics::MetricBlock;
use crate::model::{ModelKind, RegressorModel};
use crate::preprocess::{fit_transform, split, DesignMatrix, FeatureOptions, Preprocessor, SplitMode, SplitSpec};

/// Bumped whenever the report layout changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Base (or ingested) dataset plus its augmentation.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let base = match &cfg.data.path {
        Some(p) => read_csv(p)?,
        None => generate_base_dataset(cfg.data.n, cfg.data_seed())?,
    };
    let augmented = augment_dataset(&base, &cfg.augmentation()?)?;
    Ok((base, augmented))
}

/// One side of the comparison: a split dataset, preprocessed.
#[derive(Debug, Clone)]
pub struct Arm {
    pub train: DesignMatrix,
    pub test: DesignMatrix,
    pub preprocessor: Preprocessor,
    pub train_rows: usize,
    pub test_rows: usize,
}

impl Arm {
    pub fn prepare(ds: &Dataset, spec: &SplitSpec, options: FeatureOptions) -> Result<Self> {
        let (train_ds, test_ds) = split(ds, spec)?;
        let (train, preprocessor) = fit_transform(&train_ds, options)?;
        let test = preprocessor.transform(&test_ds)?;
        Ok(Arm {
            train,
            test,
            preprocessor,
            train_rows: train_ds.len(),
            test_rows: test_ds.len(),
        })
    }

    /// Sorted distinct session groups on the test side.
    pub fn test_groups(&self) -> Vec<u64> {
        let mut g = self.test.groups.clone();
        g.sort_unstable();
        g.dedup();
        g
    }

    pub fn fit(&self, kind: ModelKind, cfg: &ExperimentConfig) -> Result<RegressorModel> {
        RegressorModel::fit(kind, &self.train.x, &self.train.y, &cfg.models, cfg.model_seed(kind))
    }

    /// Fits `kind` and returns its test predictions.
    pub fn fit_predict(&self, kind: ModelKind, cfg: &ExperimentConfig) -> Result<Vec<f64>> {
        self.fit(kind, cfg)?.predict(&self.test.x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmOutcome {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ArmOutcome {
    fn from_result(r: Result<MetricBlock>) -> Self {
        match r {
            Ok(m) => ArmOutcome {
                metrics: Some(m),
                error: None,
            },
            Err(e) => ArmOutcome {
                metrics: None,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Relative change from base to augmented, in percent of the base value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentChange {
    pub rmse_pct: Option<f64>,
    pub mae_pct: Option<f64>,
    pub r2_pct: Option<f64>,
}

/// `100·(after − before)/|before|`; undefined when `before` is zero.
pub fn percent_change(before: f64, after: f64) -> Option<f64> {
    (before != 0.0).then(|| 100.0 * (after - before) / before.abs())
}

impl PercentChange {
    pub fn between(base: &MetricBlock, aug: &MetricBlock) -> Self {
        PercentChange {
            rmse_pct: percent_change(base.rmse, aug.rmse),
            mae_pct: percent_change(base.mae, aug.mae),
            r2_pct: percent_change(base.r2, aug.r2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub model: ModelKind,
    pub base: ArmOutcome,
    pub augmented: ArmOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub change: Option<PercentChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: crate::data::Source,
    pub rows: usize,
    pub content_hash: String,
    pub train_rows: usize,
    pub test_rows: usize,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub mode: SplitMode,
    pub test_fraction: f64,
    pub seed: u64,
    /// Base sessions with at least one augmented row held out. In grouped
    /// mode these are exactly the base arm's test sessions too.
    pub test_base_session_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub schema_version: u32,
    pub seed: u64,
    pub base: DatasetSummary,
    pub augmented: DatasetSummary,
    pub split: SplitSummary,
    pub warnings: Vec<String>,
    pub models: Vec<ModelComparison>,
    pub config: ExperimentConfig,
}

/// Wall-clock seconds per model and arm. Kept apart from the report so that
/// the report stays byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub models: Vec<ModelTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTiming {
    pub model: ModelKind,
    pub base_seconds: f64,
    pub augmented_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub report: CompareReport,
    pub timings: Timings,
}

fn summarize(ds: &Dataset, arm: &Arm) -> DatasetSummary {
    DatasetSummary {
        source: ds.provenance().source,
        rows: ds.len(),
        content_hash: ds.content_hash(),
        train_rows: arm.train_rows,
        test_rows: arm.test_rows,
        features: arm.train.feature_names.clone(),
    }
}

fn score(arm: &Arm, kind: ModelKind, cfg: &ExperimentConfig) -> (ArmOutcome, f64) {
    let start = Instant::now();
    let result = arm
        .fit_predict(kind, cfg)
        .and_then(|p| MetricBlock::compute(&arm.test.y, &p));
    if let Err(e) = &result {
        log::warn!("{kind}: {e}");
    }
    (ArmOutcome::from_result(result), start.elapsed().as_secs_f64())
}

/// Trains every roster model on the base and augmented datasets with the
/// same held-out sessions and reports paired metrics.
///
/// A failing model is recorded in its entry and does not stop the run.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<CompareOutput> {
    cfg.validate()?;
    let (base_ds, aug_ds) = load_datasets(cfg)?;
    let spec = cfg.split_spec();
    let base = Arm::prepare(&base_ds, &spec, FeatureOptions::default())?;
    let aug = Arm::prepare(&aug_ds, &spec, cfg.feature_options())?;
    let test_ids = aug.test_groups();
    if spec.mode == SplitMode::GroupedBySession && base.test_groups() != test_ids {
        return Err(Error::Validation {
            rows: Vec::new(),
            message: "base and augmented test sessions differ".into(),
        });
    }

    let run_one = |&kind: &ModelKind| {
        let (b, tb) = score(&base, kind, cfg);
        let (a, ta) = score(&aug, kind, cfg);
        log::info!("{kind}: base {tb:.2}s, augmented {ta:.2}s");
        let change = match (&b.metrics, &a.metrics) {
            (Some(bm), Some(am)) => Some(PercentChange::between(bm, am)),
            _ => None,
        };
        (
            ModelComparison {
                model: kind,
                base: b,
                augmented: a,
                change,
            },
            ModelTiming {
                model: kind,
                base_seconds: tb,
                augmented_seconds: ta,
            },
        )
    };
    let results: Vec<(ModelComparison, ModelTiming)> = if cfg.parallel {
        cfg.roster.par_iter().map(run_one).collect()
    } else {
        cfg.roster.iter().map(run_one).collect()
    };
    let (models, timings): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let mut warnings = base.train.warnings.clone();
    warnings.extend(base.test.warnings.iter().cloned());
    warnings.extend(aug.train.warnings.iter().cloned());
    warnings.extend(aug.test.warnings.iter().cloned());

    let report = CompareReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: cfg.seed,
        base: summarize(&base_ds, &base),
        augmented: summarize(&aug_ds, &aug),
        split: SplitSummary {
            mode: spec.mode,
            test_fraction: spec.test_fraction,
            seed: spec.seed,
            test_base_session_ids: test_ids,
        },
        warnings,
        models,
        config: cfg.clone(),
    };
    Ok(CompareOutput {
        report,
        timings: Timings { models: timings },
    })
}

impl CompareReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn entry(&self, kind: ModelKind) -> Option<&ModelComparison> {
        self.models.iter().find(|m| m.model == kind)
    }

    /// Plot-ready table: one row per model and arm.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "arm", "rmse", "mae", "r2", "plcc", "srcc", "n", "error"])
            .map_err(csv_err)?;
        for m in &self.models {
            for (arm, o) in [("base", &m.base), ("augmented", &m.augmented)] {
                let mut rec = vec![m.model.to_string(), arm.to_string()];
                match &o.metrics {
                    Some(b) => {
                        for v in [b.rmse, b.mae, b.r2, b.plcc, b.srcc] {
                            rec.push(v.to_string());
                        }
                        rec.push(b.n.to_string());
                        rec.push(String::new());
                    }
                    None => {
                        rec.extend(std::iter::repeat_n(String::new(), 6));
                        rec.push(o.error.clone().unwrap_or_default());
                    }
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.into_inner().map_err(|e| Error::invalid(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

/// Writes `report.json`, `comparison.csv` and `timings.json` into `dir`.
pub fn write_compare(out: &CompareOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write("report.json", out.report.to_json()?.as_bytes())?;
    write("comparison.csv", &out.report.to_csv()?)?;
    write(
        "timings.json",
        serde_json::to_string_pretty(&out.timings)?.as_bytes(),
    )
}

/// `(true MOS, predicted MOS)` on the augmented arm's test split.
pub fn run_scatter_export(cfg: &ExperimentConfig, kind: ModelKind) -> Result<Vec<(f64, f64)>> {
    if !cfg.roster.contains(&kind) {
        return Err(Error::invalid(format!("model `{kind}` is not in the roster")));
    }
    cfg.validate()?;
    let (_, aug_ds) = load_datasets(cfg)?;
    let arm = Arm::prepare(&aug_ds, &cfg.split_spec(), cfg.feature_options())?;
    let pred = arm.fit_predict(kind, cfg)?;
    Ok(arm.test.y.iter().copied().zip(pred).collect())
}

pub fn scatter_csv(pairs: &[(f64, f64)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["true_mos", "predicted_mos"]).map_err(csv_err)?;
    for (t, p) in pairs {
        w.write_record([t.to_string(), p.to_string()]).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::invalid(e.to_string()))
}
