//! `dmmstab`: generate, analyze, certify, simulate, and reproduce
//! stability-constrained deep Markov models.
//!
//! Exit codes: 0 ok/certified, 2 usage or parse error, 3 marginal,
//! 4 not certified, 5 runtime failure.

mod commands;
mod gen;
mod reproduce;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dmmstab", version, about = "Stability-constrained deep Markov models")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a model with prescribed spectral bands and verify it.
    Gen(GenArgs),
    /// Extract pointwise-affine forms and local norms at a state.
    Analyze(AnalyzeArgs),
    /// Certify a model's mean network; optionally attach grid evidence.
    Certify(CertifyArgs),
    /// Roll out a seeded stochastic ensemble and emit CSV diagnostics.
    Simulate(SimulateArgs),
    /// Run a canned experiment recipe (fig1, fig2, fig3).
    Reproduce(ReproduceArgs),
}

#[derive(Args, Clone)]
pub struct GenArgs {
    /// JSON config file; values in it override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Weight construction: pf, svd, or gd.
    #[arg(long, default_value = "pf")]
    pub method: String,
    /// Spectral band LO HI for the mean network weights.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.0, 0.9])]
    pub band: Vec<f64>,
    /// Number of weight layers in the mean network.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Hidden activation: identity, relu, leaky_relu, tanh, sigmoid, selu, softplus.
    #[arg(long, default_value = "relu")]
    pub act: String,
    /// Draw random biases for both networks.
    #[arg(long, default_value_t = false)]
    pub bias: bool,
    /// State dimension.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Hidden width (defaults to the state dimension; pf/gd require equality).
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Spectral band LO HI for the variance network weights.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.0, 0.9])]
    pub var_band: Vec<f64>,
    /// Number of weight layers in the variance network.
    #[arg(long, default_value_t = 3)]
    pub var_depth: usize,
    /// Constant added to the variance network's output bias (noise floor
    /// calibration; softplus of the shift sets the noise scale near the
    /// equilibrium).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub var_bias_shift: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (DMMSTAB_OUT overrides).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Clone)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// State to anchor the affine forms at, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub at: Vec<f64>,
    /// Norm: 1, 2, or inf.
    #[arg(long, default_value = "2")]
    pub p: String,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct CertifyArgs {
    /// JSON config file; values in it override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// Norm: 1, 2, or inf.
    #[arg(long, default_value = "2")]
    pub p: String,
    /// Attach sampled grid evidence.
    #[arg(long, default_value_t = false)]
    pub grid: bool,
    /// Grid box LO HI, applied to every dimension.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [-10.0, 10.0], allow_hyphen_values = true)]
    pub r#box: Vec<f64>,
    /// Grid resolution per dimension.
    #[arg(long, default_value_t = 41)]
    pub resolution: usize,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct SimulateArgs {
    /// JSON config file; values in it override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// Horizon (steps per trajectory).
    #[arg(long, default_value_t = 500)]
    pub t: usize,
    /// Realizations per initial condition.
    #[arg(long, default_value_t = 200)]
    pub m: usize,
    /// Number of initial conditions on the start circle.
    #[arg(long, default_value_t = 10)]
    pub ics: usize,
    /// Radius of the start circle.
    #[arg(long, default_value_t = 5.0)]
    pub ic_radius: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Force the noise floor to exactly zero.
    #[arg(long, default_value_t = false)]
    pub zero_variance: bool,
    /// Also emit phase.csv at this resolution (2-D models only).
    #[arg(long)]
    pub phase_resolution: Option<usize>,
    /// Phase grid box LO HI for both axes.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [-10.0, 10.0], allow_hyphen_values = true)]
    pub phase_box: Vec<f64>,
    /// Output directory (DMMSTAB_OUT overrides).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Clone)]
pub struct ReproduceArgs {
    /// Which figure recipe to run: fig1, fig2, or fig3.
    pub figure: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (DMMSTAB_OUT overrides).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Command failure with its exit code.
pub enum CmdError {
    /// Bad flags, bad config, unparseable model: exit 2.
    Usage(String),
    /// Everything else (IO, non-convergence): exit 5.
    Runtime(String),
}

impl CmdError {
    fn code(&self) -> u8 {
        match self {
            CmdError::Usage(_) => 2,
            CmdError::Runtime(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            CmdError::Usage(m) | CmdError::Runtime(m) => m,
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Runtime(format!("io error: {e}"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Gen(args) => commands::run_gen(args),
        Command::Analyze(args) => commands::run_analyze(args),
        Command::Certify(args) => commands::run_certify(args),
        Command::Simulate(args) => commands::run_simulate(args),
        Command::Reproduce(args) => commands::run_reproduce(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
