use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod error;
mod manifest;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "relmem", version, about = "Train, memorize and evaluate relational novelty detectors")]
struct Cli {
    /// Experiment config (TOML). Defaults apply to every missing field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `dataset.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory; defaults to `evaluation.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate (shapes) or ingest (CIFAR-10) the train/val/test/novel splits.
    GenData,
    /// Train and calibrate the primary classifier.
    TrainPrimary,
    /// Select the representation bank and write the memory graph.
    BuildBank,
    /// Train the comparator on bank pairs.
    TrainComparator,
    /// Score known and novel test sets at the configured gamma.
    Evaluate,
    /// Gamma sweep, plus a bank-size sweep with `--bank-sizes`.
    Sweep {
        /// Also rebuild the bank and comparator at each `evaluation.bank_sizes` entry (slow).
        #[arg(long)]
        bank_sizes: bool,
    },
    /// Render report.md from the evaluation outputs.
    Report,
    /// Gradient-check and submodularity suites.
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::TrainPrimary => "train-primary",
            Command::BuildBank => "build-bank",
            Command::TrainComparator => "train-comparator",
            Command::Evaluate => "evaluate",
            Command::Sweep { .. } => "sweep",
            Command::Report => "report",
            Command::Selftest => "selftest",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Failed(format!("thread pool: {e}")))?;
    }
    let ctx = commands::Context::new(cli.config.as_deref(), cli.seed, cli.out, cli.threads)?;
    commands::dispatch(&ctx, cli.command)
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
