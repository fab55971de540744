//! `ttde`: generate synthetic samples, fit TT densities, draw from them,
//! evaluate errors and time the compressors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use ttde::TtdeError;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<TtdeError> for CliError {
    fn from(e: TtdeError) -> Self {
        match e {
            TtdeError::Numerical(_)
            | TtdeError::NonFinite(_)
            | TtdeError::Degenerate(_)
            | TtdeError::MemoryCap { .. } => CliError::Numeric(e.to_string()),
            TtdeError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ttde", version, about = "Tensor-train density estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw samples from a synthetic law.
    Gen(GenArgs),
    /// Fit a TT density to a sample file.
    Fit(FitArgs),
    /// Draw samples from a fitted model.
    Sample(SampleArgs),
    /// Score a fitted model, as JSON lines.
    Eval(EvalArgs),
    /// Time the compressors over a sweep of N or d, as CSV.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// TOML settings (table `[gen]`) or a manifest of an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// `gm`, `gl1d` or `gl2d`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Langevin step for the GL laws.
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sample file (TTDE).
    #[arg(long)]
    pub input: PathBuf,
    /// Model file (TTTN).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub nbasis: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub rtilde: Option<usize>,
    #[arg(long)]
    pub cluster_order: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub mesh: Option<f64>,
    #[arg(long)]
    pub pad: Option<f64>,
    /// Latent dimension; fits after PCA with KDE marginals.
    #[arg(long)]
    pub pca: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// `rel-l2` or `second-moment`.
    #[arg(long)]
    pub metric: Option<String>,
    /// Exact law for `rel-l2`: `gm` or `gl1d`.
    #[arg(long)]
    pub truth: Option<String>,
    /// Reference model (`rel-l2`) or sample file (`second-moment`).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON-lines output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Appends `d,nbasis,rank,metric,value` rows for plotting.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `n` or `d`.
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub algos: Option<Vec<String>>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub nbasis: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Fit(a) => commands::fit(a),
        Command::Sample(a) => commands::sample(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ttde: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
