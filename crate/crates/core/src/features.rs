//! SALSA feature extraction.
//!
//! Seven channels per time-frequency bin: the log power spectrogram of each
//! FOA channel (W, Y, Z, X) followed by a Cartesian intensity-like vector
//! (I_x, I_y, I_z) taken from the principal eigenvector of the locally
//! smoothed 4x4 spatial covariance matrix.

use std::f64::consts::PI;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use ndarray::{s, Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::dataset_io::{read_foa_wav, DatasetManifest, SlsaTensor};
use crate::error::{Result, SeldError};
use crate::{MultichannelClip, HOP_LEN, N_FREQ_BINS, WINDOW_LEN};

/// Channels in a SALSA tensor: 4 log-spectrograms + 3 intensity components.
pub const N_FEATURE_CHANNELS: usize = 7;
/// Log-power floor applied before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;
const STD_FLOOR: f64 = 1e-8;
const DEGENERATE_EPS: f64 = 1e-9;

/// Per-channel short-time spectra, shape (4, window_len/2 + 1, T).
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub bins: Array3<Complex64>,
    pub window_len: usize,
    pub hop: usize,
}

impl ComplexSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.bins.dim().2
    }

    pub fn n_bins(&self) -> usize {
        self.bins.dim().1
    }
}

/// Number of STFT frames for a signal of `len` samples (no end padding).
pub fn frame_count(len: usize, window_len: usize, hop: usize) -> usize {
    if len < window_len {
        0
    } else {
        (len - window_len) / hop + 1
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Hann-windowed STFT of every channel. Frame `t` covers samples
/// `[t * hop, t * hop + window_len)`.
pub fn stft(clip: &MultichannelClip, window_len: usize, hop: usize) -> Result<ComplexSpectrogram> {
    let samples = clip.samples();
    let (channels, len) = samples.dim();
    if len < window_len || window_len == 0 || hop == 0 {
        return Err(SeldError::TooShort {
            len,
            needed: window_len,
        });
    }
    let n_frames = frame_count(len, window_len, hop);
    let n_bins = window_len / 2 + 1;
    let window = hann_window(window_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_len);

    let mut bins = Array3::<Complex64>::zeros((channels, n_bins, n_frames));
    let mut buf = vec![Complex64::new(0.0, 0.0); window_len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for c in 0..channels {
        let row = samples.row(c);
        for t in 0..n_frames {
            let start = t * hop;
            for (n, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(row[start + n] as f64 * window[n], 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..n_bins {
                bins[[c, k, t]] = buf[k];
            }
        }
    }
    Ok(ComplexSpectrogram {
        bins,
        window_len,
        hop,
    })
}

/// `ln(max(|X|^2, floor))` over the lowest `n_bins` bins of each channel.
pub fn log_linear_spectrogram(spec: &ComplexSpectrogram, n_bins: usize, floor: f64) -> Array3<f64> {
    let n_bins = n_bins.min(spec.n_bins());
    spec.bins
        .slice(s![.., ..n_bins, ..])
        .mapv(|z| z.norm_sqr().max(floor).ln())
}

/// Time-frequency neighbourhood used to smooth the spatial covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Smoothing {
    pub freq: usize,
    pub time: usize,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self { freq: 3, time: 3 }
    }
}

/// Principal eigenvector of a Hermitian matrix, unit norm, phase rotated so
/// the first component is real and non-negative.
pub fn principal_eigenvector(cov: &Matrix4<Complex64>) -> Vector4<Complex64> {
    let eig = SymmetricEigen::new(*cov);
    let (best, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| {
            if v > acc.1 {
                (i, v)
            } else {
                acc
            }
        });
    let mut u: Vector4<Complex64> = eig.eigenvectors.column(best).into_owned();
    let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        u /= Complex64::new(norm, 0.0);
    }
    let lead = u[0].norm();
    if lead > 0.0 {
        let phase = u[0].conj() / lead;
        u *= phase;
    }
    u
}

/// Maps a 4x4 FOA covariance (W, Y, Z, X order) to the clipped Cartesian
/// intensity vector (I_x, I_y, I_z).
pub fn principal_intensity(cov: &Matrix4<Complex64>) -> [f64; 3] {
    let u = principal_eigenvector(cov);
    if u[0].norm() <= DEGENERATE_EPS {
        return [0.0; 3];
    }
    let ratio = |i: usize| (u[i] / u[0]).re;
    // (Y, Z, X) -> (x, y, z)
    let v = [ratio(3), ratio(1), ratio(2)];
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm < DEGENERATE_EPS {
        [0.0; 3]
    } else if norm > 1.0 {
        v.map(|a| a / norm)
    } else {
        v
    }
}

/// Eigenvector-based intensity, shape (3, n_bins, T).
///
/// Each bin's covariance is the mean of `x x^H` over the smoothing
/// neighbourhood, clipped at the spectrogram edges.
pub fn eigenvector_intensity(
    spec: &ComplexSpectrogram,
    n_bins: usize,
    smoothing: Smoothing,
) -> Array3<f64> {
    let total_bins = spec.n_bins();
    let n_bins = n_bins.min(total_bins);
    let n_frames = spec.n_frames();
    let half_f = smoothing.freq / 2;
    let half_t = smoothing.time / 2;
    // rows of the spectrogram any output bin can reach
    let rows = (n_bins + half_f).min(total_bins);

    let outer = |f: usize, t: usize| -> Matrix4<Complex64> {
        let x = Vector4::from_fn(|c, _| spec.bins[[c, f, t]]);
        x * x.adjoint()
    };
    let products: Vec<Matrix4<Complex64>> = (0..n_frames)
        .flat_map(|t| (0..rows).map(move |f| (f, t)))
        .map(|(f, t)| outer(f, t))
        .collect();
    let at = |f: usize, t: usize| &products[t * rows + f];

    let columns: Vec<Vec<[f64; 3]>> = (0..n_frames)
        .into_par_iter()
        .map(|t| {
            let t_lo = t.saturating_sub(half_t);
            let t_hi = (t + half_t).min(n_frames - 1);
            (0..n_bins)
                .map(|f| {
                    let f_lo = f.saturating_sub(half_f);
                    let f_hi = (f + half_f).min(rows - 1);
                    let mut acc = Matrix4::<Complex64>::zeros();
                    for tt in t_lo..=t_hi {
                        for ff in f_lo..=f_hi {
                            acc += at(ff, tt);
                        }
                    }
                    let count = ((t_hi - t_lo + 1) * (f_hi - f_lo + 1)) as f64;
                    acc /= Complex64::new(count, 0.0);
                    principal_intensity(&acc)
                })
                .collect()
        })
        .collect();

    let mut out = Array3::<f64>::zeros((3, n_bins, n_frames));
    for (t, column) in columns.iter().enumerate() {
        for (f, v) in column.iter().enumerate() {
            for (c, &value) in v.iter().enumerate() {
                out[[c, f, t]] = value;
            }
        }
    }
    out
}

/// SALSA tensor, shape (7, 200, T), 32-bit.
///
/// Channels 0..4 are log-spectrograms of (W, Y, Z, X); 4..7 are (I_x, I_y, I_z).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    data: Array3<f32>,
}

impl FeatureTensor {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        let (c, f, _) = data.dim();
        if c != N_FEATURE_CHANNELS || f != N_FREQ_BINS {
            return Err(SeldError::ShapeMismatch(format!(
                "feature tensor must be ({N_FEATURE_CHANNELS}, {N_FREQ_BINS}, T), got {:?}",
                data.dim()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SeldError::NonFinite("feature tensor"));
        }
        Ok(Self { data })
    }

    pub(crate) fn from_array_unchecked(data: Array3<f32>) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    pub fn n_frames(&self) -> usize {
        self.data.dim().2
    }

    pub fn to_slsa(&self) -> SlsaTensor {
        let (c, f, t) = self.data.dim();
        SlsaTensor {
            dims: vec![c, f, t],
            data: self.data.iter().copied().collect(),
        }
    }

    pub fn from_slsa(tensor: SlsaTensor) -> Result<Self> {
        let dims: [usize; 3] = tensor.dims.as_slice().try_into().map_err(|_| {
            SeldError::ShapeMismatch(format!("expected 3 dims, got {:?}", tensor.dims))
        })?;
        let data = Array3::from_shape_vec(dims, tensor.data)
            .map_err(|e| SeldError::ShapeMismatch(e.to_string()))?;
        Self::new(data)
    }
}

/// Knobs for [`salsa_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SalsaConfig {
    pub window_len: usize,
    pub hop: usize,
    pub floor: f64,
    pub smoothing: Smoothing,
}

impl Default for SalsaConfig {
    fn default() -> Self {
        Self {
            window_len: WINDOW_LEN,
            hop: HOP_LEN,
            floor: LOG_FLOOR,
            smoothing: Smoothing::default(),
        }
    }
}

pub fn salsa(clip: &MultichannelClip) -> Result<FeatureTensor> {
    salsa_with(clip, &SalsaConfig::default())
}

pub fn salsa_with(clip: &MultichannelClip, config: &SalsaConfig) -> Result<FeatureTensor> {
    let spec = stft(clip, config.window_len, config.hop)?;
    if spec.n_bins() < N_FREQ_BINS {
        return Err(SeldError::ShapeMismatch(format!(
            "window of {} samples yields only {} bins",
            config.window_len,
            spec.n_bins()
        )));
    }
    let logspec = log_linear_spectrogram(&spec, N_FREQ_BINS, config.floor);
    let intensity = eigenvector_intensity(&spec, N_FREQ_BINS, config.smoothing);
    let mut data = Array3::<f32>::zeros((N_FEATURE_CHANNELS, N_FREQ_BINS, spec.n_frames()));
    data.slice_mut(s![..4, .., ..])
        .assign(&logspec.mapv(|v| v as f32));
    data.slice_mut(s![4.., .., ..])
        .assign(&intensity.mapv(|v| v as f32));
    FeatureTensor::new(data)
}

/// Per (channel, frequency) standardization statistics, shape (7, 200).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Array2<f32>,
    pub std: Array2<f32>,
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            mean: Array2::zeros((N_FEATURE_CHANNELS, N_FREQ_BINS)),
            std: Array2::ones((N_FEATURE_CHANNELS, N_FREQ_BINS)),
        }
    }

    pub fn from_tensors<'a>(tensors: impl IntoIterator<Item = &'a FeatureTensor>) -> Result<Self> {
        let mut acc = NormAccumulator::new();
        for t in tensors {
            acc.add(t);
        }
        acc.finish()
    }

    pub fn to_slsa(&self) -> SlsaTensor {
        let data = self.mean.iter().chain(self.std.iter()).copied().collect();
        SlsaTensor {
            dims: vec![2, N_FEATURE_CHANNELS, N_FREQ_BINS],
            data,
        }
    }

    pub fn from_slsa(tensor: SlsaTensor) -> Result<Self> {
        if tensor.dims != [2, N_FEATURE_CHANNELS, N_FREQ_BINS] {
            return Err(SeldError::ShapeMismatch(format!(
                "norm stats must be (2, 7, 200), got {:?}",
                tensor.dims
            )));
        }
        let half = N_FEATURE_CHANNELS * N_FREQ_BINS;
        let shape = (N_FEATURE_CHANNELS, N_FREQ_BINS);
        let mean = Array2::from_shape_vec(shape, tensor.data[..half].to_vec()).unwrap();
        let std = Array2::from_shape_vec(shape, tensor.data[half..].to_vec()).unwrap();
        if mean.iter().chain(std.iter()).any(|v| !v.is_finite()) {
            return Err(SeldError::NonFinite("norm stats"));
        }
        if std.iter().any(|&v| v <= 0.0) {
            return Err(SeldError::InvalidConfig("norm stats std must be > 0".into()));
        }
        Ok(Self { mean, std })
    }
}

/// Streaming mean/variance over feature frames (Chan et al. merge).
#[derive(Debug, Clone)]
pub struct NormAccumulator {
    count: usize,
    mean: Array2<f64>,
    m2: Array2<f64>,
}

impl Default for NormAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl NormAccumulator {
    pub fn new() -> Self {
        Self {
            count: 0,
            mean: Array2::zeros((N_FEATURE_CHANNELS, N_FREQ_BINS)),
            m2: Array2::zeros((N_FEATURE_CHANNELS, N_FREQ_BINS)),
        }
    }

    pub fn add(&mut self, tensor: &FeatureTensor) {
        let n_b = tensor.n_frames();
        if n_b == 0 {
            return;
        }
        let data = tensor.data().mapv(f64::from);
        let mean_b = data.mean_axis(Axis(2)).unwrap();
        let m2_b = data
            .axis_iter(Axis(2))
            .fold(Array2::<f64>::zeros(mean_b.dim()), |acc, frame| {
                acc + (&frame - &mean_b).mapv(|d| d * d)
            });
        let n_a = self.count as f64;
        let n_b = n_b as f64;
        let total = n_a + n_b;
        let delta = &mean_b - &self.mean;
        self.mean = &self.mean + &(&delta * (n_b / total));
        self.m2 = &self.m2 + &m2_b + &(delta.mapv(|d| d * d) * (n_a * n_b / total));
        self.count += tensor.n_frames();
    }

    pub fn finish(&self) -> Result<NormStats> {
        if self.count == 0 {
            return Err(SeldError::EmptyManifest);
        }
        let n = self.count as f64;
        Ok(NormStats {
            mean: self.mean.mapv(|m| m as f32),
            std: self
                .m2
                .mapv(|m2| ((m2 / n).sqrt().max(STD_FLOOR)) as f32),
        })
    }
}

/// Fits normalization statistics over every clip in the manifest.
pub fn compute_norm_stats(manifest: &DatasetManifest) -> Result<NormStats> {
    if manifest.is_empty() {
        return Err(SeldError::EmptyManifest);
    }
    let mut acc = NormAccumulator::new();
    for entry in manifest.entries() {
        let clip = read_foa_wav(&entry.audio)?;
        acc.add(&salsa(&clip)?);
    }
    acc.finish()
}

/// `(x - mean) / std` per (channel, frequency).
pub fn normalize(tensor: &FeatureTensor, stats: &NormStats) -> FeatureTensor {
    let mut out = tensor.data().clone();
    for ((c, f, _), v) in out.indexed_iter_mut() {
        let mean = stats.mean[[c, f]] as f64;
        let std = stats.std[[c, f]] as f64;
        *v = ((*v as f64 - mean) / std) as f32;
    }
    FeatureTensor::from_array_unchecked(out)
}
