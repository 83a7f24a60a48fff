//! `imcid` command-line front end.
//!
//! Exit status: 0 on success, 2 for usage or input errors, 3 for numerical
//! failures.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] imcid::Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "imcid",
    version,
    about = "Smoothed decorrelated score inference for linear threshold models"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the penalized smoothed estimator.
    Estimate(EstimateArgs),
    /// Score test for a coordinate or a linear contrast.
    Test(TestArgs),
    /// Data-driven bandwidth selection.
    Bandwidth(BandwidthArgs),
    /// Monte Carlo reproduction runs.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightArg {
    Inverse,
    Uniform,
}

impl From<WeightArg> for imcid::WeightMode {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Inverse => imcid::WeightMode::InverseProportion,
            WeightArg::Uniform => imcid::WeightMode::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VarianceArg {
    Auto,
    Pilot,
    Moment,
}

impl From<VarianceArg> for imcid::VarianceMode {
    fn from(v: VarianceArg) -> Self {
        match v {
            VarianceArg::Auto => imcid::VarianceMode::Auto,
            VarianceArg::Pilot => imcid::VarianceMode::Pilot,
            VarianceArg::Moment => imcid::VarianceMode::Moment,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    Gaussian,
    Uniform,
}

/// Tuning shared by `test`, `bandwidth` and `simulate`. Unset values keep
/// the library defaults (or the preset's); the rate constants can also be set
/// through `IMCID_*` environment variables.
#[derive(Debug, Clone, Args)]
pub struct Tuning {
    /// Test bandwidth: a number, `rate:<c>` for c n^{-1/5}, or `data-driven`.
    #[arg(long)]
    pub delta: Option<String>,
    /// Constant of the default bandwidth rate c n^{-1/5}.
    #[arg(long, env = "IMCID_DELTA_C")]
    pub delta_c: Option<f64>,
    #[arg(long)]
    pub kernel_order: Option<usize>,
    #[arg(long, value_enum)]
    pub variance_mode: Option<VarianceArg>,
    /// Fixed penalty for the fold estimates (default: rate rule).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, env = "IMCID_LAMBDA_C")]
    pub lambda_c: Option<f64>,
    /// Fixed bandwidth for the fold estimates (default: c_fit n^{-1/5}).
    #[arg(long)]
    pub fit_delta: Option<f64>,
    #[arg(long, env = "IMCID_C_FIT")]
    pub c_fit: Option<f64>,
    /// Pilot bias bandwidth.
    #[arg(long)]
    pub h: Option<f64>,
    /// Pilot variance bandwidth.
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long, env = "IMCID_C_H")]
    pub c_h: Option<f64>,
    #[arg(long, env = "IMCID_C_G")]
    pub c_g: Option<f64>,
    /// Dantzig tuning (default: 2 (log d / n)^{1/5}).
    #[arg(long)]
    pub lambda_prime: Option<f64>,
    /// Bandwidth grid for the data-driven rule, `min:max:points`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Double-smoothing bandwidth (default: c_b (log d / n)^{1/9}).
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, env = "IMCID_C_B")]
    pub c_b: Option<f64>,
    #[arg(long, value_enum)]
    pub weight_mode: Option<WeightArg>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Smoothing bandwidth, or `auto` for cross-validation over
    /// bandwidth and penalty.
    #[arg(long, default_value = "auto")]
    pub delta: String,
    /// Penalty; required unless the bandwidth is `auto`.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub kernel_order: usize,
    #[arg(long, value_enum, default_value_t = WeightArg::Inverse)]
    pub weight_mode: WeightArg,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// One-based coordinate to test.
    #[arg(long, conflicts_with_all = ["contrast", "all_coords"])]
    pub coord: Option<usize>,
    /// CSV file with one row of d contrast weights.
    #[arg(long, conflicts_with = "all_coords")]
    pub contrast: Option<PathBuf>,
    /// Test every coordinate and emit a CSV table with Bonferroni decisions.
    #[arg(long)]
    pub all_coords: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Fold-split seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tuning: Tuning,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub coord: usize,
    /// Fold-split seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tuning: Tuning,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the delta,V,B,M curves here.
    #[arg(long)]
    pub emit_curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named configuration; the other DGP flags override its fields.
    #[arg(long)]
    pub preset: Option<String>,
    /// Comma-separated overrides such as `d=100,s=3,rho=0.2,n=800`.
    #[arg(long)]
    pub cell: Option<String>,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Draw beta_2..s once per run instead of once per replicate.
    #[arg(long)]
    pub freeze_beta: bool,
    /// Run the preset's whole beta1 grid and report a power curve.
    #[arg(long)]
    pub power: bool,
    #[arg(long, default_value_t = 250)]
    pub reps: usize,
    /// Master seed; replicate streams are derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// One-based tested coordinate.
    #[arg(long, default_value_t = 1)]
    pub coord: usize,
    /// Run replicates one after another.
    #[arg(long)]
    pub serial: bool,
    #[command(flatten)]
    pub tuning: Tuning,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the per-replicate statistics as CSV.
    #[arg(long)]
    pub emit_statistics: Option<PathBuf>,
    /// Write normal QQ pairs as CSV.
    #[arg(long)]
    pub emit_qq: Option<PathBuf>,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::Estimate(a) => commands::estimate(&a),
        Command::Test(a) => commands::test(&a),
        Command::Bandwidth(a) => commands::bandwidth(&a),
        Command::Simulate(a) => commands::simulate(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
