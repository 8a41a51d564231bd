//! Command-line harness: data generation, model training, Granger tests,
//! experiment grids and report checks.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 some trials
//! (or a training run) failed, 4 I/O error.

mod commands;
pub mod config;
pub mod experiment;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Cond, Dgp, ExperimentConfig, SweepPoint, ZhatKind};
pub use experiment::{
    aggregate, check_rows, read_aggregate, read_rows, run_experiment, run_trial, sub_seed,
    trial_specs, write_outputs, AggregateRow, ExperimentRun, TrialRow, TrialSpec,
};

use crate::granger::Method;

/// Overrides the configured output directory; command-line flags win.
pub const OUTPUT_DIR_ENV: &str = "VGRANGER_OUTPUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{failed} of {total} runs failed")]
    Failures { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Data(_) => 2,
            CliError::Failures { .. } => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vgranger", version, about = "Confounder-aware Granger causality experiments")]
pub struct Cli {
    /// Base seed; overrides `data.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent trials.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Allow writing into an existing output location.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic bundles as CSV plus metadata.
    Generate(GenerateArgs),
    /// Train a TCVAE on one bundle.
    Train(TrainArgs),
    /// Run one Granger test per conditioning choice on a bundle.
    Test(TestArgs),
    /// Run a sweep grid from a config file.
    Experiment(ExperimentArgs),
    /// Check and summarize an experiment directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Config file; only its `[data]` and `[output]` sections are read.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dgp: Option<Dgp>,
    /// Number of bundles; bundle `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Series length.
    #[arg(long = "T", visible_alias = "t")]
    pub t: Option<usize>,
    #[arg(long)]
    pub ploss: Option<f64>,
    #[arg(long)]
    pub dp: Option<usize>,
    #[arg(long)]
    pub dz: Option<usize>,
    /// Proxy noise for the stand-in series.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Config file; its `[model]` and `[output]` sections are read.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Sliding-window length.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub dz: Option<usize>,
    /// Store the checkpoint as JSON instead of binary.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown method {s:?}; expected linear, nn_ftest or rf_r2"))
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Config file; its `[test]` section supplies defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Conditioning set; repeat for several.
    #[arg(long = "cond", value_enum)]
    pub cond: Vec<Cond>,
    /// Trained model, needed for `--cond zhat`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub lag: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Results CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `experiment`.
    pub dir: PathBuf,
}

/// Parses `args` (program name first) and runs the command, reading the
/// output-directory override from the environment.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
}

/// Like [`run`] with an explicit output-directory override.
pub fn run_with<I, T>(args: I, env_out: Option<PathBuf>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::dispatch(&cli, env_out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
