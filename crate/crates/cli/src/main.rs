#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] cbitcl_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 3,
        }
    }
}

/// Multi-currency FX option pricing, simulation and calibration with
/// CBI-time-changed Lévy factors.
///
/// Exit codes: 0 success, 1 usage error, 2 bad input data, 3 numerical failure.
/// Every output carries a header with the version, seed and a hash of the run
/// configuration and input files; the timestamp sits on its own line.
#[derive(Debug, Parser)]
#[command(name = "cbitcl", version)]
pub struct Cli {
    /// Master seed; subsystem seeds are derived from it by labeled hashing.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price European options on one pair with the COS method.
    Price(PriceArgs),
    /// Implied vol surface on the delta grid; optionally noisy, optionally as market quotes.
    Surface(SurfaceArgs),
    /// Monte Carlo simulation under the base measure with a statistics report.
    Simulate(SimulateArgs),
    /// Symmetry, martingale and put-call parity diagnostics.
    Check(CheckArgs),
    /// Calibrate a model to a quotes file.
    Calibrate(CalibrateArgs),
    /// Train a neural surrogate of the pricing map around an initial model.
    DeepTrain(DeepTrainArgs),
    /// Calibrate through a trained surrogate, then polish on the full pricer.
    DeepCalibrate(DeepCalibrateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
pub enum Preset {
    /// Two-factor JPY/USD/EUR model with the published standard-calibration parameters.
    Triangle,
    /// The same triangle with the deep-calibration parameters.
    TriangleDeep,
    /// Moderate-volatility JPY/USD/EUR model used for calibration experiments.
    Synthetic,
}

#[derive(Clone, Debug, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct ModelSource {
    /// Model JSON (a bare model or a calibration result containing `model`).
    #[arg(long, visible_alias = "model-init", value_name = "JSON")]
    #[serde(skip)]
    pub model: Option<PathBuf>,

    /// Built-in model instead of a file.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

/// COS overrides; unset fields keep the command's defaults.
#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct CosArgs {
    /// Initial number of cosine terms (>= 16).
    #[arg(long)]
    pub num_terms: Option<usize>,
    /// Adaptive doubling limit; equal to --num-terms for a fixed expansion.
    #[arg(long)]
    pub max_terms: Option<usize>,
    /// Riccati tolerance for characteristic-function values.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Riccati tolerance for the cumulant stencil.
    #[arg(long)]
    pub cumulant_tol: Option<f64>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct PriceArgs {
    #[command(flatten)]
    pub model: ModelSource,
    /// Market pair FOR-DOM, e.g. USD-JPY (price of one USD in JPY).
    #[arg(long)]
    pub pair: String,
    /// Expiries in years, comma separated.
    #[arg(long, required = true, value_delimiter = ',')]
    pub tenor: Vec<f64>,
    /// Strikes, comma separated.
    #[arg(long, required = true, value_delimiter = ',')]
    pub strikes: Vec<f64>,
    /// Price puts instead of calls.
    #[arg(long)]
    pub put: bool,
    #[command(flatten)]
    pub cos: CosArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub model: ModelSource,
    /// Pairs FOR-DOM, comma separated. Default: USD-JPY, EUR-USD, EUR-JPY when
    /// the model has those currencies, otherwise every pair.
    #[arg(long, value_delimiter = ',')]
    pub pairs: Vec<String>,
    /// Tenors in years, comma separated. Default: 1W, 2W, 1M, 3M, 6M, 1Y.
    #[arg(long, value_delimiter = ',')]
    pub tenors: Vec<f64>,
    /// Gaussian noise added to every vol, in basis points (seeded).
    #[arg(long, default_value_t = 0.0)]
    pub noise_bps: f64,
    #[command(flatten)]
    pub cos: CosArgs,
    /// Output CSV `pair,tenor,label,strike,vol,clipped`.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Also write the surface as an ATM/RR/BF quotes CSV.
    #[arg(long)]
    #[serde(skip)]
    pub quotes_out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelSource,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Simulation horizon in years; default the model horizon.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Observation times, comma separated; default the horizon.
    #[arg(long, value_delimiter = ',')]
    pub observe: Vec<f64>,
    /// Jumps below this size are replaced by matching Gaussian noise.
    #[arg(long, default_value_t = 0.01)]
    pub cutoff: f64,
    /// Statistics report JSON.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Dump every path as CSV `t,factor,path_id,X,Y,Z`.
    #[arg(long)]
    #[serde(skip)]
    pub dump_paths: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    pub model: ModelSource,
    /// Paths for the symmetry check.
    #[arg(long, default_value_t = 2_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Check times, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0])]
    pub times: Vec<f64>,
    /// Relative tolerance for inversion and triangulation on paths.
    #[arg(long, default_value_t = 1e-12)]
    pub symmetry_tol: f64,
    /// Maximum relative gap between the transform mean and the forward.
    #[arg(long, default_value_t = 1e-6)]
    pub gap_tol: f64,
    /// Put-call parity tolerance as a fraction of the forward.
    #[arg(long, default_value_t = 1e-10)]
    pub parity_tol: f64,
    #[command(flatten)]
    pub cos: CosArgs,
    /// Report JSON; a summary always goes to stdout.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
pub enum Method {
    Standard,
    Deep,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct CalibrationFlags {
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Stop the LM polish from running after a surrogate calibration.
    #[arg(long)]
    pub no_polish: bool,
    #[command(flatten)]
    pub cos: CosArgs,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Quotes CSV `pair,tenor,sigma_atm,rr25,bf25,rr10,bf10,spot,fwd_points`.
    #[arg(long)]
    #[serde(skip)]
    pub quotes: PathBuf,
    #[command(flatten)]
    pub model: ModelSource,
    #[arg(long, value_enum, default_value_t = Method::Standard)]
    pub method: Method,
    /// Trained surrogate JSON (required for --method deep).
    #[arg(long)]
    #[serde(skip)]
    pub surrogate: Option<PathBuf>,
    /// Hold parameters whose name starts with this prefix fixed (repeatable),
    /// e.g. `f0.` or `USD.zeta`.
    #[arg(long)]
    pub freeze: Vec<String>,
    /// Drop all jumps and calibrate the diffusive restriction.
    #[arg(long)]
    pub heston: bool,
    #[command(flatten)]
    pub flags: CalibrationFlags,
    /// Result JSON with the residual table and calibrated model.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct DeepTrainArgs {
    /// Centre of the sampling box and template of the parameter layout.
    #[command(flatten)]
    pub model: ModelSource,
    /// Quotes CSV fixing the output grid; default the model's own delta grid.
    #[arg(long)]
    #[serde(skip)]
    pub quotes: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Relative half-width of the sampling box around the model.
    #[arg(long, default_value_t = 0.15)]
    pub rel: f64,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    /// Hold parameters with this name prefix fixed (repeatable).
    #[arg(long)]
    pub freeze: Vec<String>,
    #[command(flatten)]
    pub cos: CosArgs,
    /// Surrogate JSON.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct DeepCalibrateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub quotes: PathBuf,
    /// Starting point; its values are mapped onto the surrogate's parameter layout.
    #[command(flatten)]
    pub model: ModelSource,
    #[arg(long)]
    #[serde(skip)]
    pub surrogate: PathBuf,
    #[command(flatten)]
    pub flags: CalibrationFlags,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
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
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
