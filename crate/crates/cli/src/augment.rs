use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use seld_core::augment::{augment_pipeline, Sample};
use seld_core::dataset_io::{write_feature_file, write_slsa};
use seld_core::{AugmentConfig, SeededRng};

use crate::io::{load_features, load_targets};
use crate::ClassArgs;

/// Seed used when neither the config file nor `--seed` provides one.
pub const DEFAULT_SEED: u64 = 17;

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Feature file to augment.
    #[arg(long)]
    features: PathBuf,
    /// ACCDOA tensor or label CSV for `--features`.
    #[arg(long)]
    labels: PathBuf,
    /// Mixup partner features.
    #[arg(long, requires = "mix_labels")]
    mix_features: Option<PathBuf>,
    /// Mixup partner labels (tensor or CSV).
    #[arg(long, requires = "mix_features")]
    mix_labels: Option<PathBuf>,
    /// Flat `key=value` config file; individual flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_features: PathBuf,
    #[arg(long)]
    out_labels: PathBuf,

    #[arg(long)]
    cs_prob: Option<String>,
    #[arg(long)]
    ps_range: Option<String>,
    #[arg(long)]
    fs_prob: Option<String>,
    #[arg(long)]
    tm_prob: Option<String>,
    #[arg(long)]
    tm_ratio_min: Option<String>,
    #[arg(long)]
    tm_ratio_max: Option<String>,
    #[arg(long)]
    mm_prob: Option<String>,
    #[arg(long)]
    mm_beta_alpha: Option<String>,
    /// fs+mm, tm+mm, all or custom.
    #[arg(long)]
    mode: Option<String>,

    #[command(flatten)]
    classes: ClassArgs,
}

impl AugmentArgs {
    fn overrides(&self) -> [(&'static str, Option<&String>); 9] {
        [
            ("cs_prob", self.cs_prob.as_ref()),
            ("ps_range", self.ps_range.as_ref()),
            ("fs_prob", self.fs_prob.as_ref()),
            ("tm_prob", self.tm_prob.as_ref()),
            ("tm_ratio_min", self.tm_ratio_min.as_ref()),
            ("tm_ratio_max", self.tm_ratio_max.as_ref()),
            ("mm_prob", self.mm_prob.as_ref()),
            ("mm_beta_alpha", self.mm_beta_alpha.as_ref()),
            ("mode", self.mode.as_ref()),
        ]
    }

    /// File values first, then flags, then validation.
    fn resolve(&self) -> Result<(AugmentConfig, u64)> {
        let (mut config, file_seed) = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                AugmentConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => (AugmentConfig::default(), None),
        };
        for (key, value) in self.overrides() {
            if let Some(value) = value {
                config.set(key, value).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        config.validate()?;
        Ok((config, self.seed.or(file_seed).unwrap_or(DEFAULT_SEED)))
    }
}

fn load_sample(features: &PathBuf, labels: &PathBuf, n_classes: usize) -> Result<Sample> {
    let features = load_features(features)?;
    let labels = load_targets(labels, features.n_frames(), n_classes)?;
    Ok(Sample { features, labels })
}

pub fn run(args: AugmentArgs) -> Result<()> {
    let (config, seed) = args.resolve()?;
    for warning in config.warnings() {
        eprintln!("{warning}");
    }
    let n_classes = args.classes.n_classes;
    let sample = load_sample(&args.features, &args.labels, n_classes)?;
    let partner = match (&args.mix_features, &args.mix_labels) {
        (Some(f), Some(l)) => Some(load_sample(f, l, n_classes)?),
        _ => None,
    };

    let mut rng = SeededRng::new(seed);
    let out = augment_pipeline(&sample, partner.as_ref(), &config, &mut rng)?;
    write_feature_file(&out.sample.features, &args.out_features)
        .with_context(|| format!("writing {}", args.out_features.display()))?;
    write_slsa(&args.out_labels, &out.sample.labels.to_slsa())
        .with_context(|| format!("writing {}", args.out_labels.display()))?;

    let t = &out.trace;
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    println!(
        "seed {seed} swap {} freq_shift {} frame_offset {} mask {} lambda {}",
        opt(t.swap_pattern.map(|p| p.to_string())),
        t.freq_shift,
        opt(t.frame_offset.map(|o| o.to_string())),
        opt(t.mask.map(|(s, l)| format!("{s}+{l}"))),
        opt(t.lambda.map(|l| format!("{l:.6}"))),
    );
    Ok(())
}
