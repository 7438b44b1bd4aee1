//! One function per subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};

use qoe_forge::config::ExperimentConfig;
use qoe_forge::data::{generate_base_dataset, read_csv, write_csv};
use qoe_forge::demographics::augment_dataset;
use qoe_forge::harness::{run_compare, run_scatter_export, scatter_csv, write_compare};
use qoe_forge::metrics::{correlation_by_demographic, MetricBlock};
use qoe_forge::model::{ModelDocument, ModelKind, RegressorModel, MODEL_SCHEMA_VERSION};
use qoe_forge::preprocess::{self, fit_transform, SplitMode};
use qoe_forge::{Error, Result};

use crate::Common;

/// Prints a line to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// Config from `--config` (or defaults) with `--seed` applied on top.
fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_path(common: &Common) -> Result<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Error::invalid("--out is required for this command"))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn generate(common: &Common, n: Option<usize>) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_path(common)?;
    let n = n.unwrap_or(cfg.data.n);
    let seed = common.seed.unwrap_or_else(|| cfg.data_seed());
    let ds = generate_base_dataset(n, seed)?;
    write_csv(&ds, out)?;
    say!("wrote {} sessions to {}", ds.len(), out.display());
    Ok(())
}

pub fn augment(common: &Common, input: &Path, noise_sigma: Option<f64>) -> Result<()> {
    let mut cfg = load_config(common)?;
    let out = out_path(common)?;
    if let Some(s) = noise_sigma {
        cfg.augment.noise_sigma = s;
    }
    let mut aug_cfg = cfg.augmentation()?;
    if let Some(s) = common.seed {
        aug_cfg.seed = s;
    }
    let base = read_csv(input)?;
    let ds = augment_dataset(&base, &aug_cfg)?;
    write_csv(&ds, out)?;
    say!("wrote {} augmented rows to {}", ds.len(), out.display());
    Ok(())
}

pub fn split(common: &Common, input: &Path, test_fraction: Option<f64>, mode: Option<&str>) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_path(common)?;
    let mut spec = cfg.split_spec();
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    if let Some(f) = test_fraction {
        spec.test_fraction = f;
    }
    if let Some(m) = mode {
        spec.mode = match m {
            "grouped_by_session" | "grouped" => SplitMode::GroupedBySession,
            "iid" => SplitMode::Iid,
            other => return Err(Error::invalid(format!("unknown split mode `{other}`"))),
        };
    }
    let ds = read_csv(input)?;
    let (train, test) = preprocess::split(&ds, &spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&train, &dir.join("train.csv"))?;
    write_csv(&test, &dir.join("test.csv"))?;
    say!(
        "wrote {} train / {} test rows to {}",
        train.len(),
        test.len(),
        dir.display()
    );
    Ok(())
}

pub fn train(common: &Common, input: &Path, model: &str, exclude_demographic: bool) -> Result<()> {
    let mut cfg = load_config(common)?;
    cfg.exclude_demographic_feature |= exclude_demographic;
    let out = out_path(common)?;
    let kind: ModelKind = model.parse()?;
    cfg.validate()?;
    let ds = read_csv(input)?;
    let (dm, pre) = fit_transform(&ds, cfg.feature_options())?;
    for w in &dm.warnings {
        log::warn!("{w}");
    }
    let seed = cfg.model_seed(kind);
    let fitted = RegressorModel::fit(kind, &dm.x, &dm.y, &cfg.models, seed)?;
    let doc = ModelDocument {
        schema_version: MODEL_SCHEMA_VERSION,
        feature_names: dm.feature_names,
        training_data_hash: ds.content_hash(),
        seed,
        preprocessor: pre,
        model: fitted,
    };
    doc.save(out)?;
    say!("trained {kind} on {} rows, wrote {}", ds.len(), out.display());
    Ok(())
}

pub fn evaluate(common: &Common, input: &Path, model: &Path, predictions: Option<&Path>) -> Result<()> {
    let out = out_path(common)?;
    let doc = ModelDocument::load(model)?;
    let ds = read_csv(input)?;
    let dm = doc.preprocessor.transform(&ds)?;
    for w in &dm.warnings {
        log::warn!("{w}");
    }
    let pred = doc.model.predict(&dm.x)?;
    let block = MetricBlock::compute(&dm.y, &pred)?;
    let report = serde_json::json!({
        "model": doc.model.kind(),
        "data_hash": ds.content_hash(),
        "metrics": block,
    });
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_bytes(out, text.as_bytes())?;
    if let Some(p) = predictions {
        let pairs: Vec<(f64, f64)> = dm.y.iter().copied().zip(pred).collect();
        write_bytes(p, &scatter_csv(&pairs)?)?;
    }
    say!(
        "{}: rmse {:.4} mae {:.4} r2 {:.4} plcc {:.4} srcc {:.4} (n = {})",
        doc.model.kind(),
        block.rmse,
        block.mae,
        block.r2,
        block.plcc,
        block.srcc,
        block.n
    );
    Ok(())
}

pub fn compare(common: &Common, exclude_demographic: bool) -> Result<()> {
    let mut cfg = load_config(common)?;
    cfg.exclude_demographic_feature |= exclude_demographic;
    let dir: PathBuf = common.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let out = run_compare(&cfg)?;
    write_compare(&out, &dir)?;
    for m in &out.report.models {
        match (&m.base.metrics, &m.augmented.metrics) {
            (Some(b), Some(a)) => say!(
                "{:<18} base r2 {:>7.4} rmse {:>7.3} | augmented r2 {:>7.4} rmse {:>7.3}",
                m.model.as_str(),
                b.r2,
                b.rmse,
                a.r2,
                a.rmse
            ),
            _ => say!(
                "{:<18} failed: {}",
                m.model.as_str(),
                m.base.error.as_deref().or(m.augmented.error.as_deref()).unwrap_or("?")
            ),
        }
    }
    say!("wrote report to {}", dir.display());
    Ok(())
}

pub fn correlate(common: &Common, input: &Path, feature: &str) -> Result<()> {
    let out = out_path(common)?;
    let ds = read_csv(input)?;
    let rows = correlation_by_demographic(&ds, feature)?;
    let mut text = String::from("demographic,n,plcc\n");
    for r in &rows {
        text.push_str(&format!("{},{},{}\n", r.demographic, r.n, r.plcc));
    }
    write_bytes(out, text.as_bytes())?;
    say!("wrote {} correlations to {}", rows.len(), out.display());
    Ok(())
}

pub fn scatter(common: &Common, model: &str, exclude_demographic: bool) -> Result<()> {
    let mut cfg = load_config(common)?;
    cfg.exclude_demographic_feature |= exclude_demographic;
    let out = out_path(common)?;
    let kind: ModelKind = model.parse()?;
    let pairs = run_scatter_export(&cfg, kind)?;
    write_bytes(out, &scatter_csv(&pairs)?)?;
    say!("wrote {} prediction pairs to {}", pairs.len(), out.display());
    Ok(())
}
