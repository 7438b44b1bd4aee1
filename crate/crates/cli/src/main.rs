use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Demographic-aware QoE augmentation and MOS regression experiments.
#[derive(Debug, Parser)]
#[command(name = "qoe-forge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options accepted by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice; overrides the config file's `seed`.
    #[arg(long, env = "QOE_FORGE_SEED")]
    pub seed: Option<u64>,
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file, or directory for commands that write several files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic base dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of sessions (default: `data.n` from the config, else 450).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Expand a base dataset into six demographic copies.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        /// Override `augment.noise_sigma`.
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
    /// Split a dataset into train.csv and test.csv inside `--out`.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        test_fraction: Option<f64>,
        /// `grouped_by_session` or `iid`.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Fit one model and write it as a JSON model document.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        exclude_demographic_feature: bool,
    },
    /// Score a saved model on a dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        /// Model document written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Also write per-row `true_mos,predicted_mos` here.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Train the roster on base and augmented data and write the report.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        exclude_demographic_feature: bool,
    },
    /// Per-demographic Pearson correlation between a feature and MOS.
    Correlate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        feature: String,
    },
    /// Export true vs. predicted MOS on the test split for one model.
    Scatter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: String,
        #[arg(long)]
        exclude_demographic_feature: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Generate { common, n } => commands::generate(&common, n),
        Command::Augment {
            common,
            input,
            noise_sigma,
        } => commands::augment(&common, &input, noise_sigma),
        Command::Split {
            common,
            input,
            test_fraction,
            mode,
        } => commands::split(&common, &input, test_fraction, mode.as_deref()),
        Command::Train {
            common,
            input,
            model,
            exclude_demographic_feature,
        } => commands::train(&common, &input, &model, exclude_demographic_feature),
        Command::Evaluate {
            common,
            input,
            model,
            predictions,
        } => commands::evaluate(&common, &input, &model, predictions.as_deref()),
        Command::Compare {
            common,
            exclude_demographic_feature,
        } => commands::compare(&common, exclude_demographic_feature),
        Command::Correlate {
            common,
            input,
            feature,
        } => commands::correlate(&common, &input, &feature),
        Command::Scatter {
            common,
            model,
            exclude_demographic_feature,
        } => commands::scatter(&common, &model, exclude_demographic_feature),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
