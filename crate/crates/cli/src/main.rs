//! `summa`: simulate ensembles, infer classifier AUROCs without labels,
//! evaluate scores against labels and run parameter sweeps.

mod commands;
mod io;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use summa::SummaError;

use crate::io::Format;

#[derive(Debug, Parser)]
#[command(name = "summa", version, about = "Unsupervised AUROC estimation and SUMMA ensembles")]
struct Cli {
    /// Seed for every random draw (required by `simulate`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory receiving output files.
    #[arg(long, global = true, env = "SUMMA_OUTPUT_DIR", default_value = "summa-output")]
    output_dir: PathBuf,

    /// Table format of the outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a conditionally independent Gaussian ensemble.
    Simulate(SimulateArgs),
    /// Estimate per-method AUROCs and ensemble scores from an unlabeled table.
    Infer(InferArgs),
    /// Rectangle-rule AUROC of every score column against labels.
    Evaluate(EvaluateArgs),
    /// Replicated simulate-and-infer runs along one axis.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
struct EnsembleArgs {
    /// Number of methods M.
    #[arg(long, default_value_t = 30)]
    methods: usize,
    /// Number of samples N.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Prevalence of the positive class.
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.4)]
    auroc_low: f64,
    #[arg(long, default_value_t = 0.8)]
    auroc_high: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Ties {
    Midrank,
    Strict,
}

#[derive(Debug, Clone, Args)]
struct RecoveryArgs {
    /// Relative tolerance on successive leading values.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Iteration cap of the recoveries.
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
}

#[derive(Debug, Args)]
struct InferArgs {
    /// Table with a sample id column followed by one score column per method.
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Ties::Midrank)]
    ties: Ties,
    /// Known prevalence; skips inferring it from third moments.
    #[arg(long)]
    prevalence: Option<f64>,
    /// Skip the third-order path (weights only unless --prevalence is given).
    #[arg(long)]
    no_tensor: bool,
    #[command(flatten)]
    recovery: RecoveryArgs,
    /// Cells already hold ranks (1 = most confidently positive).
    #[arg(long)]
    already_ranked: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Table with a sample id column followed by score columns.
    scores: PathBuf,
    /// Two-column table of sample id and 0/1 label.
    labels: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    Methods,
    Samples,
    Prevalence,
    EnsembleSize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: Axis,
    /// Axis values: comma list of numbers or `start:end[:step]` ranges.
    #[arg(long)]
    values: Option<String>,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    /// Random method subsets per WOC point on the ensemble-size axis.
    #[arg(long, default_value_t = 50)]
    woc_subsets: usize,
    /// Infer ρ per replicate instead of assuming the simulated value.
    #[arg(long)]
    infer_prevalence: bool,
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[command(flatten)]
    recovery: RecoveryArgs,
}

/// Exit code for runs that stopped at an iteration cap.
const EXIT_NOT_CONVERGED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<SummaError>() {
                Some(SummaError::NotConverged { .. }) => ExitCode::from(EXIT_NOT_CONVERGED),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
