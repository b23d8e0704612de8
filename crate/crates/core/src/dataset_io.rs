//! Readers and writers for FOA audio, DCASE-style label CSVs, dataset
//! manifests and the `SLSA` binary tensor container.
//!
//! `SLSA` layout (all integers little endian):
//!
//! ```text
//! b"SLSA" | version: u32 = 1 | ndim: u32 | dims: ndim x u64 | payload: f32 LE, row-major
//! ```

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use ndarray::Array2;

use crate::error::{Result, SeldError};
use crate::{N_CLASSES, SAMPLE_RATE, WINDOW_LEN};

const SLSA_MAGIC: &[u8; 4] = b"SLSA";
const SLSA_VERSION: u32 = 1;

/// Four-channel FOA waveform in ACN order (W, Y, Z, X) at 24 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelClip {
    samples: Array2<f32>,
}

impl MultichannelClip {
    /// Validates channel count, minimum length and finiteness.
    pub fn new(samples: Array2<f32>) -> Result<Self> {
        let (channels, len) = samples.dim();
        if channels != 4 {
            return Err(SeldError::WrongChannelCount(channels));
        }
        if len < WINDOW_LEN {
            return Err(SeldError::TooShort {
                len,
                needed: WINDOW_LEN,
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(SeldError::NonFinite("audio samples"));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &Array2<f32> {
        &self.samples
    }

    pub fn into_samples(self) -> Array2<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }
}

/// One active event in one 100 ms label frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub frame: usize,
    pub class_id: usize,
    /// Degrees in [-180, 180).
    pub azimuth: f64,
    /// Degrees in [-90, 90].
    pub elevation: f64,
}

impl EventRecord {
    pub fn new(frame: usize, class_id: usize, azimuth: f64, elevation: f64) -> Self {
        Self {
            frame,
            class_id,
            azimuth: wrap_azimuth(azimuth),
            elevation,
        }
    }

    fn sort_key_cmp(&self, other: &Self) -> Ordering {
        (self.frame, self.class_id)
            .cmp(&(other.frame, other.class_id))
            .then(self.azimuth.total_cmp(&other.azimuth))
            .then(self.elevation.total_cmp(&other.elevation))
    }
}

/// Wraps an azimuth in degrees into [-180, 180).
pub fn wrap_azimuth(azimuth: f64) -> f64 {
    if (-180.0..180.0).contains(&azimuth) {
        return azimuth;
    }
    let wrapped = (azimuth + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Sparse event labels, sorted by (frame, class) with exact duplicates removed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventList {
    records: Vec<EventRecord>,
}

impl EventList {
    pub fn new(records: Vec<EventRecord>, n_classes: usize) -> Result<Self> {
        for r in &records {
            if r.class_id >= n_classes {
                return Err(SeldError::ClassOutOfRange {
                    class: r.class_id,
                    n_classes,
                });
            }
            if !r.azimuth.is_finite() || !r.elevation.is_finite() {
                return Err(SeldError::NonFinite("event direction"));
            }
            if !(-90.0..=90.0).contains(&r.elevation) {
                return Err(SeldError::ElevationOutOfRange(r.elevation));
            }
        }
        let mut records: Vec<EventRecord> = records
            .into_iter()
            .map(|r| EventRecord::new(r.frame, r.class_id, r.azimuth, r.elevation))
            .collect();
        records.sort_by(EventRecord::sort_key_cmp);
        records.dedup();
        Ok(Self { records })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter()
    }

    /// Copy with azimuth and elevation rounded to whole degrees.
    pub fn rounded_to_degrees(&self) -> Self {
        let mut records: Vec<EventRecord> = self
            .records
            .iter()
            .map(|r| {
                EventRecord::new(
                    r.frame,
                    r.class_id,
                    r.azimuth.round(),
                    r.elevation.round().clamp(-90.0, 90.0),
                )
            })
            .collect();
        records.sort_by(EventRecord::sort_key_cmp);
        records.dedup();
        Self { records }
    }

    /// Same frames and classes, directions equal within `tol_deg` on both
    /// angles (azimuth compared on the circle).
    pub fn approx_eq(&self, other: &EventList, tol_deg: f64) -> bool {
        self.len() == other.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.frame == b.frame
                    && a.class_id == b.class_id
                    && wrap_azimuth(a.azimuth - b.azimuth).abs() <= tol_deg
                    && (a.elevation - b.elevation).abs() <= tol_deg
            })
    }

    /// One past the largest frame index, or 0 when empty.
    pub fn frame_span(&self) -> usize {
        self.records.iter().map(|r| r.frame + 1).max().unwrap_or(0)
    }
}

impl<'a> IntoIterator for &'a EventList {
    type Item = &'a EventRecord;
    type IntoIter = std::slice::Iter<'a, EventRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub audio: PathBuf,
    pub labels: Option<PathBuf>,
    pub split: String,
}

/// List of (audio, labels, split) entries.
///
/// Text format: one `audio_path,label_path,split` row per line, `label_path`
/// may be empty, `#` starts a comment, and an optional `n_classes=N` line
/// overrides the default of 13. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    n_classes: usize,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, n_classes: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.audio.clone()) {
                return Err(SeldError::DuplicatePath(e.audio.clone()));
            }
        }
        Ok(Self { entries, n_classes })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SeldError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut entries = Vec::new();
    let mut n_classes = N_CLASSES;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: &str| SeldError::MalformedRow {
            line: idx + 1,
            reason: reason.to_string(),
        };
        if let Some(value) = line.strip_prefix("n_classes=") {
            n_classes = value
                .trim()
                .parse()
                .map_err(|_| malformed("bad n_classes value"))?;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.is_empty() || fields.len() > 3 || fields[0].is_empty() {
            return Err(malformed("expected audio_path,label_path,split"));
        }
        let labels = fields.get(1).filter(|s| !s.is_empty()).map(|s| resolve(s));
        let split = fields.get(2).copied().unwrap_or("").to_string();
        entries.push(ManifestEntry {
            audio: resolve(fields[0]),
            labels,
            split,
        });
    }
    DatasetManifest::new(entries, n_classes)
}

/// Reads a 4-channel 24 kHz PCM WAV, scaling integer formats into [-1, 1].
pub fn read_foa_wav(path: impl AsRef<Path>) -> Result<MultichannelClip> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| SeldError::io(path, e))?;
    let reader = hound::WavReader::new(BufReader::new(file))
        .map_err(|e| SeldError::MalformedWav(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 4 {
        return Err(SeldError::WrongChannelCount(spec.channels as usize));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(SeldError::WrongSampleRate(spec.sample_rate));
    }

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| SeldError::MalformedWav(e.to_string()))?,
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<Result<_, _>>()
                .map_err(|e| SeldError::MalformedWav(e.to_string()))?
        }
        (format, bits) => {
            return Err(SeldError::MalformedWav(format!(
                "unsupported sample format {format:?} with {bits} bits"
            )))
        }
    };
    if interleaved.len() % 4 != 0 {
        return Err(SeldError::MalformedWav("partial final frame".into()));
    }
    let n = interleaved.len() / 4;
    let samples = Array2::from_shape_fn((4, n), |(c, i)| interleaved[i * 4 + c]);
    MultichannelClip::new(samples).map_err(|e| match e {
        SeldError::NonFinite(_) => SeldError::MalformedWav("non-finite sample".into()),
        other => other,
    })
}

/// Sample encoding used by [`write_foa_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Int16,
    Float32,
}

pub fn write_foa_wav(
    clip: &MultichannelClip,
    path: impl AsRef<Path>,
    encoding: WavEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let (bits, format) = match encoding {
        WavEncoding::Int16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 4,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec)
            .map_err(|e| SeldError::MalformedWav(e.to_string()))?;
        let samples = clip.samples();
        for i in 0..clip.len() {
            for c in 0..4 {
                let v = samples[[c, i]];
                let res = match encoding {
                    WavEncoding::Int16 => {
                        writer.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
                    }
                    WavEncoding::Float32 => writer.write_sample(v),
                };
                res.map_err(|e| SeldError::MalformedWav(e.to_string()))?;
            }
        }
        writer
            .finalize()
            .map_err(|e| SeldError::MalformedWav(e.to_string()))?;
    }
    atomic_write(path, &cursor.into_inner())
}

/// Parses DCASE metadata rows `frame,class,source,azimuth,elevation`.
///
/// The source column is read and discarded. The result is sorted by
/// (frame, class) with azimuths wrapped into [-180, 180).
pub fn parse_label_csv(text: &str, n_classes: usize) -> Result<EventList> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| SeldError::MalformedRow {
            line: idx + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(malformed(format!("expected 5 fields, found {}", fields.len())));
        }
        let frame: usize = fields[0]
            .parse()
            .map_err(|_| malformed(format!("bad frame index {:?}", fields[0])))?;
        let class_id: usize = fields[1]
            .parse()
            .map_err(|_| malformed(format!("bad class index {:?}", fields[1])))?;
        fields[2]
            .parse::<i64>()
            .map_err(|_| malformed(format!("bad source index {:?}", fields[2])))?;
        let azimuth: f64 = fields[3]
            .parse()
            .map_err(|_| malformed(format!("bad azimuth {:?}", fields[3])))?;
        let elevation: f64 = fields[4]
            .parse()
            .map_err(|_| malformed(format!("bad elevation {:?}", fields[4])))?;
        if !azimuth.is_finite() || !elevation.is_finite() || !(-90.0..=90.0).contains(&elevation)
        {
            return Err(malformed("direction out of range".into()));
        }
        if class_id >= n_classes {
            return Err(SeldError::ClassOutOfRange {
                class: class_id,
                n_classes,
            });
        }
        records.push(EventRecord::new(frame, class_id, azimuth, elevation));
    }
    EventList::new(records, n_classes)
}

pub fn read_label_csv(path: impl AsRef<Path>, n_classes: usize) -> Result<EventList> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SeldError::io(path, e))?;
    parse_label_csv(&text, n_classes)
}

pub fn format_label_csv(events: &EventList) -> String {
    let mut out = String::new();
    for r in events {
        out.push_str(&format!(
            "{},{},0,{},{}\n",
            r.frame, r.class_id, r.azimuth, r.elevation
        ));
    }
    out
}

pub fn write_label_csv(events: &EventList, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), format_label_csv(events).as_bytes())
}

/// Dense f32 tensor as stored in a `SLSA` file.
#[derive(Debug, Clone, PartialEq)]
pub struct SlsaTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl SlsaTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(SeldError::ShapeMismatch(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(SLSA_MAGIC);
        out.extend_from_slice(&SLSA_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = |expected: usize| SeldError::TruncatedPayload {
            expected,
            found: bytes.len(),
        };
        if bytes.len() < 4 {
            return Err(if SLSA_MAGIC.starts_with(bytes) {
                truncated(12)
            } else {
                SeldError::BadMagic
            });
        }
        if &bytes[..4] != SLSA_MAGIC {
            return Err(SeldError::BadMagic);
        }
        if bytes.len() < 12 {
            return Err(truncated(12));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != SLSA_VERSION {
            return Err(SeldError::VersionMismatch(version));
        }
        let ndim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = 12 + 8 * ndim;
        if bytes.len() < header {
            return Err(truncated(header));
        }
        let dims: Vec<usize> = bytes[12..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| SeldError::ShapeMismatch(format!("dims {dims:?} overflow")))?;
        let expected = header + 4 * count;
        if bytes.len() < expected {
            return Err(truncated(expected));
        }
        if bytes.len() > expected {
            return Err(SeldError::ShapeMismatch(format!(
                "{} trailing bytes after payload",
                bytes.len() - expected
            )));
        }
        let data = bytes[header..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }
}

pub fn write_slsa(path: impl AsRef<Path>, tensor: &SlsaTensor) -> Result<()> {
    atomic_write(path.as_ref(), &tensor.to_bytes())
}

pub fn read_slsa(path: impl AsRef<Path>) -> Result<SlsaTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SeldError::io(path, e))?;
    SlsaTensor::from_bytes(&bytes)
}

pub fn write_feature_file(tensor: &crate::FeatureTensor, path: impl AsRef<Path>) -> Result<()> {
    write_slsa(path, &tensor.to_slsa())
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<crate::FeatureTensor> {
    crate::FeatureTensor::from_slsa(read_slsa(path)?)
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| {
            SeldError::io(
                path,
                std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"),
            )
        })?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!(
        ".{file_name}.tmp.{}.{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, AtomicOrdering::Relaxed)
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(SeldError::io(path, e));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;

    fn clip_of(len: usize) -> MultichannelClip {
        MultichannelClip::new(Array2::from_shape_fn((4, len), |(c, i)| {
            ((i * 7 + c * 3) % 17) as f32 / 17.0 - 0.5
        }))
        .unwrap()
    }

    fn write_raw_wav(path: &Path, channels: u16, rate: u32, frames: usize) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for i in 0..frames * channels as usize {
            w.write_sample((i % 100) as i16).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn wav_shape_passthrough() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        write_raw_wav(&path, 4, 24_000, 24_000);
        let clip = read_foa_wav(&path).unwrap();
        assert_eq!(clip.samples().dim(), (4, 24_000));
    }

    #[test]
    fn wav_rejects_wrong_channels_and_rate() {
        let dir = tempfile::tempdir().unwrap();
        let stereo = dir.path().join("s.wav");
        write_raw_wav(&stereo, 2, 24_000, 1000);
        assert!(matches!(
            read_foa_wav(&stereo),
            Err(SeldError::WrongChannelCount(2))
        ));
        let cd = dir.path().join("cd.wav");
        write_raw_wav(&cd, 4, 44_100, 1000);
        assert!(matches!(
            read_foa_wav(&cd),
            Err(SeldError::WrongSampleRate(44_100))
        ));
        let junk = dir.path().join("junk.wav");
        fs::write(&junk, b"RIFFnope").unwrap();
        assert!(matches!(read_foa_wav(&junk), Err(SeldError::MalformedWav(_))));
    }

    #[test]
    fn int16_full_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fs.wav");
        let spec = hound::WavSpec {
            channels: 4,
            sample_rate: 24_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..600 {
            for v in [i16::MIN, i16::MAX, 0, -1] {
                w.write_sample(v).unwrap();
            }
        }
        w.finalize().unwrap();
        let clip = read_foa_wav(&path).unwrap();
        assert_eq!(clip.samples()[[0, 5]], -1.0);
        assert_eq!(clip.samples()[[1, 5]], 32767.0 / 32768.0);
        assert_eq!(clip.samples()[[3, 5]], -1.0 / 32768.0);
    }

    #[test]
    fn float_wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let clip = clip_of(777);
        write_foa_wav(&clip, &path, WavEncoding::Float32).unwrap();
        assert_eq!(read_foa_wav(&path).unwrap(), clip);
    }

    #[test]
    fn short_clip_rejected() {
        let err = MultichannelClip::new(Array2::zeros((4, 100))).unwrap_err();
        assert!(matches!(err, SeldError::TooShort { len: 100, .. }));
    }

    #[test]
    fn label_row_mapping() {
        let ev = parse_label_csv("10,2,0,30,-10\n", 13).unwrap();
        assert_eq!(ev.records(), &[EventRecord::new(10, 2, 30.0, -10.0)]);
        assert!(parse_label_csv("", 13).unwrap().is_empty());
        assert!(matches!(
            parse_label_csv("0,15,0,0,0", 13),
            Err(SeldError::ClassOutOfRange { class: 15, .. })
        ));
        assert!(matches!(
            parse_label_csv("0,1,0,0", 13),
            Err(SeldError::MalformedRow { line: 1, .. })
        ));
        assert!(matches!(
            parse_label_csv("a,1,0,0,0", 13),
            Err(SeldError::MalformedRow { .. })
        ));
    }

    #[test]
    fn labels_sorted_and_wrapped() {
        let ev = parse_label_csv("5,3,1,190,0\n2,7,0,-180,5\n2,1,0,180,5\n", 13).unwrap();
        let keys: Vec<_> = ev.iter().map(|r| (r.frame, r.class_id, r.azimuth)).collect();
        assert_eq!(keys, vec![(2, 1, -180.0), (2, 7, -180.0), (5, 3, -170.0)]);
    }

    #[test]
    fn label_writer_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        write_label_csv(&EventList::empty(), &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "");
        let ev = EventList::new(vec![EventRecord::new(3, 4, -20.0, 15.0)], 13).unwrap();
        write_label_csv(&ev, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "3,4,0,-20,15\n");
    }

    #[test]
    fn wrap_azimuth_range() {
        assert_eq!(wrap_azimuth(180.0), -180.0);
        assert_eq!(wrap_azimuth(-180.0), -180.0);
        assert_eq!(wrap_azimuth(359.0), -1.0);
        assert_eq!(wrap_azimuth(30.1), 30.1);
        assert!(wrap_azimuth(-180.0 - 1e-14) < 180.0);
    }

    #[test]
    fn feature_file_size_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.slsa");
        let data = Array3::from_shape_fn((7, 200, 10), |(c, f, t)| {
            (c as f32 - 3.0) * 0.25 + f as f32 * 1e-3 - t as f32 * 7.5
        });
        let tensor = crate::FeatureTensor::new(data).unwrap();
        write_feature_file(&tensor, &path).unwrap();
        let len = fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(len, 4 + 4 + 4 + 3 * 8 + 7 * 200 * 10 * 4);
        let back = read_feature_file(&path).unwrap();
        assert!(back
            .data()
            .iter()
            .zip(tensor.data().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn slsa_errors() {
        let t = SlsaTensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        let bytes = t.to_bytes();
        assert!(matches!(
            SlsaTensor::from_bytes(&bytes[..bytes.len() - 1]),
            Err(SeldError::TruncatedPayload { .. })
        ));
        assert!(matches!(
            SlsaTensor::from_bytes(&bytes[..10]),
            Err(SeldError::TruncatedPayload { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(SlsaTensor::from_bytes(&bad), Err(SeldError::BadMagic)));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            SlsaTensor::from_bytes(&v2),
            Err(SeldError::VersionMismatch(2))
        ));
        assert!(SlsaTensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn manifest_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        fs::write(
            &path,
            "# clips\nn_classes=12\na.wav,a.csv,train\n/abs/b.wav,,test\n",
        )
        .unwrap();
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.n_classes(), 12);
        assert_eq!(m.entries()[0].audio, dir.path().join("a.wav"));
        assert_eq!(m.entries()[0].labels, Some(dir.path().join("a.csv")));
        assert_eq!(m.entries()[1].audio, PathBuf::from("/abs/b.wav"));
        assert_eq!(m.entries()[1].labels, None);

        fs::write(&path, "a.wav,,x\na.wav,,y\n").unwrap();
        assert!(matches!(
            read_manifest(&path),
            Err(SeldError::DuplicatePath(_))
        ));
    }

    fn arb_events() -> impl Strategy<Value = EventList> {
        prop::collection::vec((0usize..50, 0usize..13, -180i32..180, -90i32..=90), 0..40).prop_map(
            |rows| {
                let records = rows
                    .into_iter()
                    .map(|(f, c, a, e)| EventRecord::new(f, c, a as f64 + 0.25, e as f64))
                    .collect();
                EventList::new(records, 13).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn label_csv_round_trip(events in arb_events()) {
            let text = format_label_csv(&events);
            prop_assert_eq!(parse_label_csv(&text, 13).unwrap(), events);
        }

        #[test]
        fn slsa_round_trip_bitwise(dims in prop::collection::vec(1usize..5, 1..4), seed in any::<u32>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32) & 0x7f7f_ffff)).collect();
            let t = SlsaTensor::new(dims, data).unwrap();
            let back = SlsaTensor::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(back.dims, t.dims);
            prop_assert!(back.data.iter().zip(&t.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
