use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use seld_core::accdoa::{self, label_frames_for};
use seld_core::dataset_io::{read_feature_file, read_label_csv, read_slsa};
use seld_core::{AccdoaTensor, EventList, FeatureTensor};

/// True when the file starts with the tensor container magic.
pub fn is_tensor_file(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 4];
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let n = f.read(&mut magic).with_context(|| format!("reading {}", path.display()))?;
    Ok(n == 4 && &magic == b"SLSA")
}

pub fn load_features(path: &Path) -> Result<FeatureTensor> {
    read_feature_file(path).with_context(|| format!("loading features from {}", path.display()))
}

pub fn load_accdoa(path: &Path) -> Result<AccdoaTensor> {
    let tensor = read_slsa(path).with_context(|| format!("reading {}", path.display()))?;
    AccdoaTensor::from_slsa(tensor).with_context(|| format!("{} is not an ACCDOA tensor", path.display()))
}

pub fn load_events(path: &Path, n_classes: usize) -> Result<EventList> {
    read_label_csv(path, n_classes).with_context(|| format!("loading labels from {}", path.display()))
}

/// Loads ACCDOA targets for a feature tensor with `feature_frames` frames,
/// either from a tensor file or by encoding a label CSV.
pub fn load_targets(path: &Path, feature_frames: usize, n_classes: usize) -> Result<AccdoaTensor> {
    if is_tensor_file(path)? {
        return load_accdoa(path);
    }
    let events = load_events(path, n_classes)?;
    accdoa::encode(&events, label_frames_for(feature_frames), n_classes)
        .with_context(|| format!("encoding {}", path.display()))
}

/// Predictions given either as a label CSV or as an ACCDOA tensor.
pub enum Predictions {
    Events(EventList),
    Tensor(AccdoaTensor),
}

pub fn load_predictions(path: &Path, n_classes: usize) -> Result<Predictions> {
    if is_tensor_file(path)? {
        Ok(Predictions::Tensor(load_accdoa(path)?))
    } else {
        Ok(Predictions::Events(load_events(path, n_classes)?))
    }
}

/// `path` with its extension replaced by `ext`.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}
