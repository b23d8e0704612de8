use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SeldError> = std::result::Result<T, E>;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum SeldError {
    #[error("expected 4 FOA channels, found {0}")]
    WrongChannelCount(usize),
    #[error("expected a 24000 Hz sample rate, found {0} Hz")]
    WrongSampleRate(u32),
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("signal has {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("class {class} out of range (n_classes = {n_classes})")]
    ClassOutOfRange { class: usize, n_classes: usize },
    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate path in manifest: {0}")]
    DuplicatePath(PathBuf),

    #[error("bad magic bytes, not a SLSA tensor file")]
    BadMagic,
    #[error("unsupported SLSA version {0}")]
    VersionMismatch(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("manifest has no entries")]
    EmptyManifest,

    #[error("elevation {0} outside [-90, 90]")]
    ElevationOutOfRange(f64),
    #[error("zero-length direction vector")]
    ZeroVector,
    #[error("two events of class {class} in frame {frame}")]
    SameClassOverlap { frame: usize, class: usize },
    #[error("event frame {frame} >= n_frames {n_frames}")]
    FrameOutOfRange { frame: usize, n_frames: usize },
    #[error("ensemble needs at least one tensor")]
    EmptyEnsemble,

    #[error("frequency shift {shift} exceeds range {range}")]
    ShiftOutOfRange { shift: i64, range: usize },
    #[error("offset {0} is not a multiple of the label resolution")]
    NonAlignedOffset(i64),
    #[error("mask ratio {ratio} outside [{min}, {max}]")]
    RatioOutOfRange { ratio: f64, min: f64, max: f64 },
    #[error("mask [{start}, {end}) not aligned to label frames or out of bounds")]
    Misaligned { start: usize, end: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SeldError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SeldError::Io {
            path: path.into(),
            source,
        }
    }
}
