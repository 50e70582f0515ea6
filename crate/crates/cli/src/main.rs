//! `otx`: command-line driver for the otx toolkit.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure,
//! 3 property failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use otx_core::OtError;

#[derive(Parser, Debug)]
#[command(
    name = "otx",
    version,
    about = "Optimal-transport estimators and Sinkhorn autoencoder experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate a divergence between two point-cloud CSV files.
    Divergence(DivergenceArgs),
    /// Matching cost vs. moment-based W2 for scaled high-dimensional Gaussians.
    GaussHighdim(SweepArgs),
    /// Generate a 3-D Swiss roll.
    SwissrollGen(SwissRollArgs),
    /// Train an autoencoder from a JSON run configuration.
    Train(TrainArgs),
    /// Run seeded property suites.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Sinkhorn,
    Hungarian,
    Sliced,
    Mmd,
    W2gauss,
}

#[derive(Args, Debug)]
pub struct DivergenceArgs {
    /// First point cloud (CSV, one point per row, optional header).
    pub x: PathBuf,
    /// Second point cloud.
    pub y: PathBuf,
    #[arg(long, value_enum, default_value = "sinkhorn")]
    pub method: Method,
    /// Sinkhorn regularizer.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Sinkhorn iteration cap.
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// Cost exponent.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Number of random directions for the sliced estimate.
    #[arg(long, default_value_t = otx_core::exact::DEFAULT_PROJECTIONS)]
    pub projections: usize,
    /// RBF bandwidth for MMD; the median pairwise distance when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving divergence.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// JSON sweep configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving gauss_highdim.csv and config.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SwissRollArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving swiss_roll.csv; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON run configuration (`dataset` and `sae` sections).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the trainer seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving config.json, encoder.bin, decoder.bin and train_log.csv.
    #[arg(long, default_value = "otx-train")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// all, sinkhorn, exact, gaussian, diff or theory.
    #[arg(default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving check_report.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
    Property(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Property(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) | CliError::Property(m) => f.write_str(m),
        }
    }
}

impl From<OtError> for CliError {
    fn from(e: OtError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Divergence(a) => commands::divergence(&a),
        Command::GaussHighdim(a) => commands::gauss_highdim(&a),
        Command::SwissrollGen(a) => commands::swissroll_gen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Check(a) => commands::check(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("otx: {e}");
            ExitCode::from(e.code())
        }
    }
}
