use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use seld_core::dataset_io::{read_foa_wav, read_manifest, read_slsa, write_feature_file, write_slsa, ManifestEntry};
use seld_core::features::{normalize, salsa, NormAccumulator};
use seld_core::{DatasetManifest, FeatureTensor, NormStats};

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Manifest with one `audio,labels,split` row per clip.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory receiving one `<clip>.slsa` feature file per clip.
    #[arg(long)]
    out_dir: PathBuf,
    /// Normalization statistics. Loaded if the file exists, otherwise fitted
    /// on this manifest and written there. Features are normalized either way.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the fitted statistics.
    #[arg(long)]
    out: PathBuf,
}

fn output_names(manifest: &DatasetManifest, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut seen: HashMap<PathBuf, &Path> = HashMap::new();
    let mut names = Vec::with_capacity(manifest.len());
    for entry in manifest.entries() {
        let stem = entry
            .audio
            .file_stem()
            .ok_or_else(|| anyhow!("{} has no file name", entry.audio.display()))?;
        let out = out_dir.join(stem).with_extension("slsa");
        if let Some(prev) = seen.insert(out.clone(), &entry.audio) {
            bail!(
                "{} and {} would both be written to {}",
                prev.display(),
                entry.audio.display(),
                out.display()
            );
        }
        names.push(out);
    }
    Ok(names)
}

fn featurize(entry: &ManifestEntry) -> Result<FeatureTensor> {
    let clip = read_foa_wav(&entry.audio).with_context(|| format!("reading {}", entry.audio.display()))?;
    salsa(&clip).with_context(|| format!("extracting features from {}", entry.audio.display()))
}

/// Features for every entry, computed in parallel. Failures are printed per
/// file and turned into one error at the end.
fn featurize_all(manifest: &DatasetManifest) -> Result<Vec<FeatureTensor>> {
    let results: Vec<Result<FeatureTensor>> = manifest.entries().par_iter().map(featurize).collect();
    let mut tensors = Vec::with_capacity(results.len());
    let mut failed = 0;
    for result in results {
        match result {
            Ok(t) => tensors.push(t),
            Err(e) => {
                eprintln!("error: {e:#}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} clips failed", manifest.len());
    }
    Ok(tensors)
}

fn fit(tensors: &[FeatureTensor]) -> Result<NormStats> {
    let mut acc = NormAccumulator::new();
    for t in tensors {
        acc.add(t);
    }
    Ok(acc.finish()?)
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let manifest = read_manifest(path).with_context(|| format!("reading manifest {}", path.display()))?;
    if manifest.is_empty() {
        bail!("manifest {} has no entries", path.display());
    }
    Ok(manifest)
}

pub fn run(args: ExtractArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let outputs = output_names(&manifest, &args.out_dir)?;

    let stats = match &args.stats {
        Some(path) if path.exists() => {
            let tensor = read_slsa(path).with_context(|| format!("reading {}", path.display()))?;
            Some(NormStats::from_slsa(tensor).with_context(|| format!("loading stats from {}", path.display()))?)
        }
        _ => None,
    };

    if let (Some(path), None) = (&args.stats, &stats) {
        // Fitting needs every clip, so nothing is written unless all succeed.
        let tensors = featurize_all(&manifest)?;
        let stats = fit(&tensors)?;
        write_slsa(path, &stats.to_slsa()).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("fitted normalization stats on {} clips -> {}", tensors.len(), path.display());
        let results = tensors
            .par_iter()
            .zip(&outputs)
            .enumerate()
            .map(|(i, (t, out))| (i, write_features(&normalize(t, &stats), out)))
            .collect();
        return report(results, &outputs);
    }

    let results = manifest
        .entries()
        .par_iter()
        .zip(&outputs)
        .enumerate()
        .map(|(i, (entry, out))| {
            let r = featurize(entry).and_then(|t| match &stats {
                Some(s) => write_features(&normalize(&t, s), out),
                None => write_features(&t, out),
            });
            (i, r)
        })
        .collect();
    report(results, &outputs)
}

fn write_features(tensor: &FeatureTensor, out: &Path) -> Result<()> {
    write_feature_file(tensor, out).with_context(|| format!("writing {}", out.display()))
}

fn report(results: Vec<(usize, Result<()>)>, outputs: &[PathBuf]) -> Result<()> {
    let mut failed = 0;
    for (i, r) in results {
        match r {
            Ok(()) => println!("{}", outputs[i].display()),
            Err(e) => {
                eprintln!("error: {e:#}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} clips failed", outputs.len());
    }
    Ok(())
}

pub fn run_stats(args: StatsArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let tensors = featurize_all(&manifest)?;
    let stats = fit(&tensors)?;
    write_slsa(&args.out, &stats.to_slsa()).with_context(|| format!("writing {}", args.out.display()))?;
    let frames: usize = tensors.iter().map(FeatureTensor::n_frames).sum();
    println!("clips {} frames {frames}", tensors.len());
    for (c, (mean, std)) in stats.mean.rows().into_iter().zip(stats.std.rows()).enumerate() {
        let m = mean.iter().map(|&v| f64::from(v)).sum::<f64>() / mean.len() as f64;
        let s = std.iter().map(|&v| f64::from(v)).sum::<f64>() / std.len() as f64;
        println!("channel {c} mean {m:.4} std {s:.4}");
    }
    Ok(())
}
