//! `vfar`: simulate, estimate and inspect sparse vector functional
//! autoregressions from the command line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vfar_core::solver::Criterion;

use config::{ModelKind, Preset};

#[derive(Debug, Parser)]
#[command(name = "vfar", version, about = "Sparse vector functional autoregression toolkit")]
pub struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON settings for the command, or a manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random VFAR(1) model and a curve panel from it.
    Simulate(SimulateArgs),
    /// FPCA, then fit every row at a given gamma or at the IC-selected point of a path.
    Fit(EstimateArgs),
    /// FPCA, then the full regularization path (with ROC when a truth is given).
    Path(EstimateArgs),
    /// Pick one point per row from a saved path.
    Select(SelectArgs),
    /// Build the Granger-causality network from estimated kernels.
    Network(NetworkArgs),
    /// Stability measure and operator norm over a grid of the 2x2 example.
    Stability(StabilityArgs),
    /// Monte Carlo check of the concentration rates.
    VerifyConcentration(ConcentrationArgs),
    /// Turn minute prices into demeaned cumulative intraday return curves.
    IngestCidr(CidrArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Ic {
    Aic,
    Bic,
}

impl From<Ic> for Criterion {
    fn from(ic: Ic) -> Self {
        match ic {
            Ic::Aic => Criterion::Aic,
            Ic::Bic => Criterion::Bic,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Nonzero blocks per row for the sparse model.
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub bandwidth: Option<usize>,
    /// Dimension of the generating Fourier basis.
    #[arg(long)]
    pub basis_dim: Option<usize>,
    #[arg(long)]
    pub grid_len: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub measurement_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Long-format panel CSV (`t,variable,grid_index,value`).
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Truth model JSON for evaluation.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub lag: Option<usize>,
    /// Dimension of the cubic B-spline basis used for FPCA.
    #[arg(long)]
    pub basis_dim: Option<usize>,
    /// Largest number of components tried by cross-validation.
    #[arg(long)]
    pub q_max: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub eta_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub path_len: Option<usize>,
    /// Smallest gamma on the path as a fraction of gamma_max.
    #[arg(long)]
    pub path_ratio: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Standardized regularization level shared by every row (fit only).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Information criterion for selection along the path (fit only).
    #[arg(long, value_enum)]
    pub ic: Option<Ic>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// `path.json` written by `vfar path`.
    #[arg(long)]
    pub path: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub ic: Option<Ic>,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    #[arg(long)]
    pub kernels: Option<PathBuf>,
    /// Keep edges whose weight exceeds this value.
    #[arg(long, conflicts_with = "indegree")]
    pub threshold: Option<f64>,
    /// Keep the `d` heaviest incoming edges of every node.
    #[arg(long)]
    pub indegree: Option<usize>,
    /// Do not count self-loops toward the indegree.
    #[arg(long)]
    pub no_self: bool,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub b: Option<Vec<f64>>,
    #[arg(long)]
    pub theta_grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureArg {
    Iid,
    Ar1,
}

#[derive(Debug, Args)]
pub struct ConcentrationArgs {
    #[arg(long, value_enum)]
    pub fixture: Option<FixtureArg>,
    /// AR(1) coefficient of the dependent fixture.
    #[arg(long, allow_hyphen_values = true)]
    pub ar: Option<f64>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub score_lags: Option<Vec<usize>>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CidrArgs {
    /// CSV with columns `date,ticker,minute_index,price`.
    #[arg(long)]
    pub prices: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
