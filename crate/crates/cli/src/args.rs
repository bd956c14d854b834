//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "SEMIPEN_THREADS";

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "semipen", version, about = "Penalized model selection for partially linear regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Fit one fixed model (covariate set and cell count) to a CSV file.
    Fit(FitArgs),
    /// Run the penalized search on a CSV file.
    Select(SelectArgs),
    /// Run a Monte Carlo experiment on a catalog or JSON-specified design.
    Experiment(ExperimentArgs),
    /// List the built-in data-generating designs.
    Catalog(OutputArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Input CSV (header row required).
    #[arg(long)]
    pub csv: PathBuf,
    /// Response column.
    #[arg(long)]
    pub y: String,
    /// Index column, values in [0, 1].
    #[arg(long)]
    pub t: String,
    /// Covariate columns, comma separated; default every other column.
    #[arg(long, value_delimiter = ',')]
    pub x: Option<Vec<String>>,
    /// Map T affinely onto [0, 1] using its observed min and max.
    #[arg(long)]
    pub rescale_t: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseArg {
    /// Fixed model; only meaningful for `fit`.
    Case0,
    Case1,
    Case2,
    Case3,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyArg {
    /// The schedule matching the case.
    Default,
    /// `c (|I| + rK) / n`, needs `--c`.
    Additive,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value = "case3")]
    pub case: CaseArg,
    /// Smoothness budget; the polynomial order is floor((b - 1) / 2).
    /// Defaults to 3, or 5 for rate experiments.
    #[arg(long)]
    pub b: Option<u32>,
    /// Known support for case1, as column names (or indices in experiments).
    #[arg(long, value_delimiter = ',')]
    pub i0: Option<Vec<String>>,
    /// Known smoothness for case2.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Smoothness margin for case3.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long, value_enum, default_value = "default")]
    pub penalty: PenaltyArg,
    /// Constant of the additive penalty.
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Covariates in the model, comma separated column names (may be empty).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub model: Vec<String>,
    /// Number of dyadic cells (a power of two).
    #[arg(long)]
    pub k: usize,
    /// Smoothness budget; the polynomial order is floor((b - 1) / 2).
    #[arg(long, default_value_t = 3)]
    pub b: u32,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKindArg {
    Selection,
    Coverage,
    Rate,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub kind: ExperimentKindArg,
    /// Catalog design name (see `catalog`).
    #[arg(long, conflicts_with = "spec")]
    pub dgp: Option<String>,
    /// JSON file holding a design specification.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Base seed; replication i at size n uses a hash of (seed, n, i).
    #[arg(long, required = true)]
    pub seed: u64,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Write one CSV row per replication here.
    #[arg(long)]
    pub dump_reps: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}
