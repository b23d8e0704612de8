//! `seld`: batch front end for the seld-core toolkit.

use std::num::NonZeroUsize;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod augment;
mod extract;
mod gradcheck;
mod io;
mod labels;
mod score;

/// Raised when a check the tool exists to enforce does not hold. Maps to
/// exit code 2; every other error is treated as bad input (exit code 1).
#[derive(Debug)]
pub struct InvariantViolation(pub String);

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvariantViolation {}

#[derive(Debug, Parser)]
#[command(name = "seld", version, about = "SELD feature, label, augmentation and scoring pipeline")]
struct Cli {
    /// Worker threads for per-file parallelism (defaults to the core count).
    #[arg(long, global = true)]
    threads: Option<NonZeroUsize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute SALSA features for every clip in a manifest.
    Extract(extract::ExtractArgs),
    /// Fit normalization statistics over a manifest.
    Stats(extract::StatsArgs),
    /// Run the stochastic augmentation pipeline on one feature/label pair.
    Augment(augment::AugmentArgs),
    /// Turn a label CSV into an ACCDOA tensor.
    Encode(labels::EncodeArgs),
    /// Threshold an ACCDOA tensor into a label CSV.
    Decode(labels::DecodeArgs),
    /// Average ACCDOA tensors and decode the result.
    Ensemble(labels::EnsembleArgs),
    /// Score predictions against reference labels.
    Score(score::ScoreArgs),
    /// Verify SE block gradients against finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
}

/// Options shared by commands that read label CSVs.
#[derive(Debug, Clone, Args)]
pub struct ClassArgs {
    /// Number of event classes.
    #[arg(long, default_value_t = seld_core::N_CLASSES)]
    pub n_classes: usize,
}

fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n.get());
    }
    let pool = pool.build()?;
    pool.install(|| match cli.command {
        Command::Extract(args) => extract::run(args),
        Command::Stats(args) => extract::run_stats(args),
        Command::Augment(args) => augment::run(args),
        Command::Encode(args) => labels::run_encode(args),
        Command::Decode(args) => labels::run_decode(args),
        Command::Ensemble(args) => labels::run_ensemble(args),
        Command::Score(args) => score::run(args),
        Command::Gradcheck(args) => gradcheck::run(args),
    })
}

fn main() -> ExitCode {
    // Usage errors are input errors; clap's own exit code 2 is reserved here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<InvariantViolation>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
