//! `mpk`: command-line front end for Volterra identification with PK/MPK networks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mpk::experiments::Tuning;
use mpk::{ErrorClass, KernelKind};

/// Exit codes of the command-line contract.
pub const EXIT_LIMITS: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "mpk", version, about = "Volterra series identification with polynomial kernel networks")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON configuration for the subcommand; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice made by the subcommand.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = "mpk-out")]
    pub out: PathBuf,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Expand a kernel into its per-monomial penalties.
    Expand(ExpandArgs),
    /// Identify a NARX model from a `u,y` record.
    Fit(FitArgs),
    /// One-step prediction or free-run simulation with a fitted model.
    Predict(PredictArgs),
    /// Monte Carlo comparison on the memory-6 cubic benchmark.
    Bench(BenchArgs),
    /// Train on a measured record and score prediction and simulation.
    Silverbox(SilverboxArgs),
}

#[derive(Args, Debug)]
pub struct ExpandArgs {
    #[arg(long, value_name = "pk|mpk")]
    pub kernel: Option<KernelKind>,
    /// Kernel JSON (`{"kind":"mpk","r":..,"d":..,"raw_offsets":..,"raw_increments":..}`).
    #[arg(long, value_name = "PATH")]
    pub params: Option<PathBuf>,
    /// Memory `m`; the kernel acts on `m + 1` inputs.
    #[arg(short = 'm', long)]
    pub memory: Option<usize>,
    #[arg(short = 'r', long)]
    pub degree: Option<u32>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Two-column `u,y` CSV.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "pk|mpk")]
    pub kernel: Option<KernelKind>,
    #[arg(short = 'r', long)]
    pub degree: Option<u32>,
    /// Input lags.
    #[arg(short = 'm', long)]
    pub memory: Option<usize>,
    /// Output lags (defaults to the memory; 0 gives a pure input model).
    #[arg(long)]
    pub output_lags: Option<usize>,
    #[arg(long, value_name = "ml|cv|ml+cv|fixed")]
    pub tuning: Option<Tuning>,
    /// Initial (or, with fixed tuning, final) kernel JSON.
    #[arg(long, value_name = "PATH")]
    pub params: Option<PathBuf>,
    /// Initial noise std in output units.
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Leading regression rows used for training (default: all).
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Disable z-scoring of regressors and target.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    Onestep,
    Freerun,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// `model.json` written by `fit`.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<PredictMode>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Reference scenario 1..=4.
    #[arg(long)]
    pub experiment: Option<u32>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Regression rows per training and per test record.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SilverboxArgs {
    /// Directory with `train.csv` and `test.csv` (falls back to `SILVERBOX_DATA`).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Use the built-in synthetic surrogate record instead of measured data.
    #[arg(long)]
    pub surrogate: bool,
    #[arg(long, value_name = "ml|cv|ml+cv|fixed")]
    pub tuning: Option<Tuning>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }
}

impl From<mpk::Error> for Failure {
    fn from(e: mpk::Error) -> Self {
        let code = match e.class() {
            ErrorClass::Limits => EXIT_LIMITS,
            ErrorClass::Input => EXIT_INPUT,
            ErrorClass::Numerical => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; 2 is reserved for limits
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
