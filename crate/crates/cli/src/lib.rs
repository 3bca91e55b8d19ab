//! Command-line driver: configuration loading, subcommand dispatch and report
//! files. Data goes to files under `--out`; diagnostics go to stderr.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fracfilter::Mode;

pub use config::{load_config, parse_config, ConfigError, Overrides, ResolvedConfig, RunConfig};
pub use report::{Format, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fracfilter", version, about = "Minimum-variance filters under fractional Gaussian noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Multi-start gain optimization.
    Optimize(Flags),
    /// Error covariance and cost of the configured gain.
    Evaluate(Flags),
    /// Paper, validated and finite-difference gradients side by side.
    /// Without --config a random instance is drawn from --seed.
    Gradcheck(Flags),
    /// Monte-Carlo error statistics against the analytic covariance.
    Simulate(Flags),
    /// Roots of the two-step example quintic and the matching optima.
    Example(Flags),
    /// Autocovariance table and optional sample sequences.
    Noise(NoiseFlags),
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub a1: Option<f64>,
    #[arg(long)]
    pub a2: Option<f64>,
    /// Gradient used for reported stationarity residuals.
    #[arg(long, default_value_t = Mode::Validated)]
    pub mode: Mode,
}

impl Flags {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            paths: self.paths,
            starts: self.starts,
            tolerance: self.tol,
            max_iterations: self.max_iters,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct NoiseFlags {
    /// Hurst parameters; taken from the config when omitted.
    #[arg(long)]
    pub hurst: Vec<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Largest lag in the table.
    #[arg(long, default_value_t = 32)]
    pub lags: usize,
    /// Number of sample sequences per Hurst parameter.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    /// Length of each sample sequence.
    #[arg(long, default_value_t = 256)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(commands::Outcome::Done) => EXIT_OK,
        Ok(commands::Outcome::NotConverged(msg)) => {
            eprintln!("fracfilter: {msg}");
            EXIT_NOT_CONVERGED
        }
        Err(e) => {
            eprintln!("fracfilter: {e}");
            EXIT_INVALID
        }
    }
}
