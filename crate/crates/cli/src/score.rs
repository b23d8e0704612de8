use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use seld_core::accdoa::{decode, DEFAULT_THRESHOLD};
use seld_core::dataset_io::atomic_write;
use seld_core::metrics::{
    compute_seld_scores_with, format_table, sweep_to_csv, threshold_sweep, Averaging, ScoringConfig,
    DEFAULT_SPATIAL_THRESHOLD, SWEEP_THRESHOLDS,
};

use crate::io::{load_events, load_predictions, Predictions};
use crate::ClassArgs;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AveragingArg {
    Macro,
    Micro,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Predicted label CSV or ACCDOA tensor.
    #[arg(long)]
    pred: PathBuf,
    /// Reference label CSV.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Decode a tensor prediction at 0.3, 0.5 and 0.7 and print one row each.
    #[arg(long)]
    threshold_sweep: bool,
    /// Activity threshold for a tensor prediction without a sweep.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Angular distance in degrees under which a match counts as correct.
    #[arg(long, default_value_t = DEFAULT_SPATIAL_THRESHOLD)]
    spatial_threshold: f64,
    #[arg(long, value_enum, default_value_t = AveragingArg::Macro)]
    averaging: AveragingArg,
    /// Write a CSV report here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    classes: ClassArgs,
}

pub fn run(args: ScoreArgs) -> Result<()> {
    if !(args.spatial_threshold > 0.0 && args.spatial_threshold <= 180.0) {
        bail!("spatial threshold {} must be in (0, 180]", args.spatial_threshold);
    }
    let n_classes = args.classes.n_classes;
    let config = ScoringConfig {
        spatial_threshold: args.spatial_threshold,
        averaging: match args.averaging {
            AveragingArg::Macro => Averaging::Macro,
            AveragingArg::Micro => Averaging::Micro,
        },
        n_classes,
        ..ScoringConfig::default()
    };
    let refs = load_events(&args.reference, n_classes)?;
    let pred = load_predictions(&args.pred, n_classes)?;

    if args.threshold_sweep {
        let Predictions::Tensor(tensor) = pred else {
            bail!("--threshold-sweep needs an ACCDOA tensor prediction, {} is a label CSV", args.pred.display());
        };
        let rows = threshold_sweep(&tensor, &refs, &SWEEP_THRESHOLDS, &config);
        let labelled: Vec<(String, _)> = rows
            .iter()
            .map(|r| (format!("threshold {}", r.threshold), &r.scores))
            .collect();
        print!("{}", format_table(&labelled));
        if let Some(path) = &args.report {
            atomic_write(path, sweep_to_csv(&rows).as_bytes()).with_context(|| format!("writing {}", path.display()))?;
        }
        return Ok(());
    }

    let events = match pred {
        Predictions::Events(e) => e,
        Predictions::Tensor(t) => decode(&t, args.threshold),
    };
    let scores = compute_seld_scores_with(&events, &refs, &config);
    println!("{}", scores.summary());
    if scores.er_undefined {
        eprintln!("note: reference has no events, ER reported as 0");
    }
    if let Some(path) = &args.report {
        atomic_write(path, scores.to_csv().as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
