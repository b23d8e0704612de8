//! Sound event localization and detection (SELD) data-pipeline toolkit.
//!
//! The crate covers the path from 4-channel first-order ambisonics (FOA)
//! audio to scored predictions:
//!
//! * [`dataset_io`]: WAV/label CSV/manifest readers and the `SLSA` tensor container.
//! * [`features`]: STFT and the SALSA feature (log-linear spectrograms plus
//!   eigenvector-based intensity vectors).
//! * [`accdoa`]: activity-coupled Cartesian DoA targets, threshold decoding, ensembling.
//! * [`augment`]: channel swap, frequency shift, frame shift, time masking,
//!   moderate mixup and the composed stochastic pipeline.
//! * [`se_block`]: channel and frequency squeeze-and-excitation with analytic
//!   gradients and a finite-difference checker.
//! * [`metrics`]: segment-based location-dependent ER/F1 and class-dependent LE/LR.
//! * [`synth`]: deterministic synthetic FOA scenes for tests and demos.

pub mod accdoa;
pub mod augment;
pub mod dataset_io;
mod error;
pub mod features;
pub mod metrics;
pub mod se_block;
pub mod synth;

pub use accdoa::{AccdoaTensor, ACCDOA_AXES};
pub use augment::{AugmentConfig, AugmentMode, SeededRng, SwapPattern};
pub use dataset_io::{DatasetManifest, EventList, EventRecord, MultichannelClip};
pub use error::{Result, SeldError};
pub use features::{FeatureTensor, NormStats};
pub use metrics::SeldScores;

/// FOA sample rate accepted by the reader, in Hz.
pub const SAMPLE_RATE: u32 = 24_000;
/// Number of sound event classes.
pub const N_CLASSES: usize = 13;
/// STFT window length in samples.
pub const WINDOW_LEN: usize = 512;
/// STFT hop in samples.
pub const HOP_LEN: usize = 300;
/// Linear-frequency bins kept in the feature.
pub const N_FREQ_BINS: usize = 200;
/// Feature frames per 100 ms label frame.
pub const FRAMES_PER_LABEL: usize = 8;
