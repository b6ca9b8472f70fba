//! Command-line surface. Flags override values read from `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Method;

#[derive(Debug, Parser)]
#[command(
    name = "specshrink",
    version,
    about = "Multi-trial spectral estimation with VAR / smoothed-periodogram shrinkage"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trials of the VAR(5) + VMA(1) mixture process to an MTS1 file.
    Simulate(SimulateArgs),
    /// Estimate the spectral matrix of a trial file and write CSV tables.
    Estimate(EstimateArgs),
    /// Band partial coherence for one condition, or a jackknife comparison of two.
    Connectivity(ConnectivityArgs),
    /// Monte Carlo MSE comparison of estimators on the mixture process.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat key = value run configuration; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Use the 12-channel, 120-trial, 256-sample configuration (the default;
    /// accepted for explicitness).
    #[arg(long)]
    pub paper_defaults: bool,
    /// Number of trials [default: 120].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Samples per trial [default: 256].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Sampling rate in Hz written to the file [default: 256].
    #[arg(long)]
    pub sampling_rate: Option<f64>,
    /// Weight of the VMA(1) component [default: 0.65].
    #[arg(long)]
    pub ma_weight: Option<f64>,
    /// Weight of the VAR(5) component [default: 0.35].
    #[arg(long)]
    pub ar_weight: Option<f64>,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Detrend {
    None,
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Sampling rate in Hz for CSV input (MTS1 files carry their own) [default: 1].
    #[arg(long)]
    pub csv_sampling_rate: Option<f64>,
    /// Remove a per-trial, per-channel polynomial trend before estimation.
    #[arg(long, value_enum, default_value_t = Detrend::None)]
    pub detrend: Detrend,
    /// Scale every trial and channel to unit sample variance.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Shrinkage risk window C_T (odd) [default: 15].
    #[arg(long)]
    pub window: Option<usize>,
    /// Smallest PURE candidate span [default: 3].
    #[arg(long)]
    pub span_min: Option<usize>,
    /// Largest PURE candidate span [default: min(T/4 rounded down to odd, 63)].
    #[arg(long)]
    pub span_max: Option<usize>,
    /// Use this span for every trial instead of PURE selection.
    #[arg(long)]
    pub span: Option<usize>,
    /// Largest VAR order searched by BIC [default: 10].
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Fit this VAR order instead of selecting by BIC.
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub input_opts: InputArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// MTS1 trial file, or long CSV (trial,channel,time,value) by extension.
    #[arg(long)]
    pub input: PathBuf,
    /// Estimator [default: shrinkage].
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Largest PURE candidate taper count [default: bandwidth-matched to the span grid].
    #[arg(long)]
    pub taper_max: Option<usize>,
    /// Use this many tapers instead of PURE selection.
    #[arg(long)]
    pub tapers: Option<usize>,
    /// Shrinkage weight on the VAR estimate; requires --fixed.
    #[arg(long, requires = "fixed")]
    pub weight: Option<f64>,
    /// Use --weight (default 1) at every frequency instead of the estimated weight.
    #[arg(long)]
    pub fixed: bool,
    /// Output directory [default: .].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ConnectivityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub input_opts: InputArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// One trial file per condition; give two to run the between-condition tests.
    #[arg(long = "input", required = true, num_args = 1)]
    pub inputs: Vec<PathBuf>,
    /// Frequency band as name:lo_hz:hi_hz; repeatable [default: alpha:8:12, beta:18:30].
    #[arg(long = "band")]
    pub bands: Vec<String>,
    /// Benjamini-Hochberg false discovery rate [default: 0.05].
    #[arg(long)]
    pub q: Option<f64>,
    /// Output directory [default: .].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorName {
    Truth,
    Raw,
    Var,
    Smoothed,
    Multitaper,
    Shrinkage,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Monte Carlo replicates.
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Trials per replicate [default: 120].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Samples per trial [default: 256].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Estimators to compare, comma separated.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = [EstimatorName::Truth, EstimatorName::Var, EstimatorName::Smoothed,
                              EstimatorName::Multitaper, EstimatorName::Shrinkage])]
    pub estimators: Vec<EstimatorName>,
    /// Shrinkage risk windows, comma separated; one shrinkage column each [default: 15].
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<usize>,
    /// Largest VAR order searched by BIC [default: 10].
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Smallest PURE candidate span [default: 3].
    #[arg(long)]
    pub span_min: Option<usize>,
    /// Largest PURE candidate span.
    #[arg(long)]
    pub span_max: Option<usize>,
    /// Largest PURE candidate taper count.
    #[arg(long)]
    pub taper_max: Option<usize>,
    /// Output directory [default: .].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
