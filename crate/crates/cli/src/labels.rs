use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use seld_core::accdoa::{decode, encode, ensemble_average, label_frames_for, DEFAULT_THRESHOLD};
use seld_core::dataset_io::{write_label_csv, write_slsa};
use seld_core::AccdoaTensor;

use crate::io::{load_accdoa, load_events, load_features, sibling};
use crate::ClassArgs;

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Label CSV (`frame,class,source,azimuth,elevation`).
    #[arg(long)]
    labels: PathBuf,
    /// Number of label frames in the output.
    #[arg(long, conflicts_with = "features")]
    frames: Option<usize>,
    /// Take the label frame count from this feature file instead.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    classes: ClassArgs,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Activity threshold; cells with norm strictly above it become events.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// ACCDOA tensors to average.
    #[arg(required = true)]
    tensors: Vec<PathBuf>,
    /// Averaged tensor.
    #[arg(long)]
    out: PathBuf,
    /// Decoded CSV (defaults to `--out` with a `.csv` extension).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        bail!("threshold {threshold} must be a finite value >= 0");
    }
    Ok(())
}

pub fn run_encode(args: EncodeArgs) -> Result<()> {
    let events = load_events(&args.labels, args.classes.n_classes)?;
    let frames = match (&args.features, args.frames) {
        (Some(path), _) => label_frames_for(load_features(path)?.n_frames()),
        (None, Some(n)) => n,
        (None, None) => events.frame_span(),
    };
    let tensor = encode(&events, frames, args.classes.n_classes)
        .with_context(|| format!("encoding {}", args.labels.display()))?;
    write_slsa(&args.out, &tensor.to_slsa()).with_context(|| format!("writing {}", args.out.display()))?;
    println!("{} events -> ({}, {}, {})", events.len(), 3, tensor.n_classes(), tensor.n_frames());
    Ok(())
}

pub fn run_decode(args: DecodeArgs) -> Result<()> {
    check_threshold(args.threshold)?;
    let tensor = load_accdoa(&args.tensor)?;
    let events = decode(&tensor, args.threshold);
    write_label_csv(&events, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("{} events", events.len());
    Ok(())
}

pub fn run_ensemble(args: EnsembleArgs) -> Result<()> {
    check_threshold(args.threshold)?;
    let tensors: Vec<AccdoaTensor> = args
        .tensors
        .par_iter()
        .map(|p| load_accdoa(p))
        .collect::<Result<_>>()?;
    let mean = ensemble_average(&tensors)?;
    write_slsa(&args.out, &mean.to_slsa()).with_context(|| format!("writing {}", args.out.display()))?;
    let csv = args.csv.unwrap_or_else(|| sibling(&args.out, "csv"));
    let events = decode(&mean, args.threshold);
    write_label_csv(&events, &csv).with_context(|| format!("writing {}", csv.display()))?;
    println!("{} tensors -> {} events", tensors.len(), events.len());
    Ok(())
}
