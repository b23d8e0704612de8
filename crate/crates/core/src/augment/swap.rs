//! FOA channel swap: the 16 azimuth/elevation transforms that an FOA
//! recording realizes as channel permutations and sign flips.

use ndarray::s;

use crate::accdoa::AccdoaTensor;
use crate::dataset_io::{wrap_azimuth, MultichannelClip};
use crate::features::FeatureTensor;

// Channel indices in waveforms and log-spectrograms (ACN order).
const CH_Y: usize = 1;
const CH_Z: usize = 2;
const CH_X: usize = 3;
// Intensity channels in a feature tensor.
const IV_X: usize = 4;
const IV_Y: usize = 5;
const IV_Z: usize = 6;

/// How the horizontal (x, y) components map: `x' = sign_x * (swap ? y : x)`,
/// `y' = sign_y * (swap ? x : y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XyMap {
    pub swap: bool,
    pub sign_x: i8,
    pub sign_y: i8,
}

/// One of the 16 transforms `az -> s*az + k*90`, `el -> e*el`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SwapPattern {
    reflect: bool,
    quarter_turns: u8,
    flip_z: bool,
}

impl SwapPattern {
    pub const COUNT: usize = 16;

    pub fn identity() -> Self {
        Self::from_index(0)
    }

    /// `index = 8 * flip_z + 4 * reflect + quarter_turns`; index 0 is the identity.
    pub fn from_index(index: usize) -> Self {
        assert!(index < Self::COUNT, "swap pattern index {index} out of range");
        Self {
            reflect: index & 4 != 0,
            quarter_turns: (index & 3) as u8,
            flip_z: index & 8 != 0,
        }
    }

    pub fn index(&self) -> usize {
        (self.flip_z as usize) << 3 | (self.reflect as usize) << 2 | self.quarter_turns as usize
    }

    /// `(s, k, e)`: azimuth maps to `s*az + k*90`, elevation to `e*el`.
    pub fn label_map(&self) -> (i8, u8, i8) {
        (
            if self.reflect { -1 } else { 1 },
            self.quarter_turns,
            if self.flip_z { -1 } else { 1 },
        )
    }

    pub fn xy_map(&self) -> XyMap {
        let (swap, sign_x, sign_y) = match (self.reflect, self.quarter_turns) {
            (false, 0) => (false, 1, 1),
            (false, 1) => (true, -1, 1),
            (false, 2) => (false, -1, -1),
            (false, 3) => (true, 1, -1),
            (true, 0) => (false, 1, -1),
            (true, 1) => (true, 1, 1),
            (true, 2) => (false, -1, 1),
            (true, 3) => (true, -1, -1),
            _ => unreachable!(),
        };
        XyMap {
            swap,
            sign_x,
            sign_y,
        }
    }

    pub fn z_sign(&self) -> i8 {
        if self.flip_z {
            -1
        } else {
            1
        }
    }

    /// Applies the orthogonal map to a Cartesian (x, y, z) vector.
    pub fn transform_vector(&self, v: [f64; 3]) -> [f64; 3] {
        let m = self.xy_map();
        let (src_x, src_y) = if m.swap { (v[1], v[0]) } else { (v[0], v[1]) };
        [
            m.sign_x as f64 * src_x,
            m.sign_y as f64 * src_y,
            self.z_sign() as f64 * v[2],
        ]
    }

    /// Transformed (azimuth, elevation) in degrees.
    pub fn map_doa(&self, azimuth: f64, elevation: f64) -> (f64, f64) {
        let (s, k, e) = self.label_map();
        (
            wrap_azimuth(s as f64 * azimuth + k as f64 * 90.0),
            e as f64 * elevation,
        )
    }

    /// The pattern equal to applying `self` first and then `next`.
    pub fn then(&self, next: &SwapPattern) -> SwapPattern {
        // next(self(az)) = s2 (s1 az + k1) + k2
        let (s2, k2, _) = next.label_map();
        let k1 = self.quarter_turns as i32;
        let k = (s2 as i32 * k1 + k2 as i32).rem_euclid(4) as u8;
        SwapPattern {
            reflect: self.reflect ^ next.reflect,
            quarter_turns: k,
            flip_z: self.flip_z ^ next.flip_z,
        }
    }

    pub fn inverse(&self) -> SwapPattern {
        let k = if self.reflect {
            self.quarter_turns
        } else {
            (4 - self.quarter_turns) % 4
        };
        SwapPattern {
            reflect: self.reflect,
            quarter_turns: k,
            flip_z: self.flip_z,
        }
    }
}

pub fn enumerate_swap_patterns() -> Vec<SwapPattern> {
    (0..SwapPattern::COUNT).map(SwapPattern::from_index).collect()
}

/// Applies the pattern to a feature tensor: the Y/X log-spectrograms swap
/// when the horizontal axes swap, and the intensity channels get the full
/// signed map.
pub fn swap_features(features: &FeatureTensor, pattern: &SwapPattern) -> FeatureTensor {
    let m = pattern.xy_map();
    let src = features.data();
    let mut out = src.clone();
    if m.swap {
        out.slice_mut(s![CH_Y, .., ..]).assign(&src.slice(s![CH_X, .., ..]));
        out.slice_mut(s![CH_X, .., ..]).assign(&src.slice(s![CH_Y, .., ..]));
    }
    let (from_x, from_y) = if m.swap { (IV_Y, IV_X) } else { (IV_X, IV_Y) };
    let sx = m.sign_x as f32;
    let sy = m.sign_y as f32;
    let sz = pattern.z_sign() as f32;
    out.slice_mut(s![IV_X, .., ..])
        .assign(&src.slice(s![from_x, .., ..]).mapv(|v| sx * v));
    out.slice_mut(s![IV_Y, .., ..])
        .assign(&src.slice(s![from_y, .., ..]).mapv(|v| sy * v));
    out.slice_mut(s![IV_Z, .., ..])
        .assign(&src.slice(s![IV_Z, .., ..]).mapv(|v| sz * v));
    FeatureTensor::from_array_unchecked(out)
}

pub fn swap_labels(labels: &AccdoaTensor, pattern: &SwapPattern) -> AccdoaTensor {
    let src = labels.data();
    let mut out = src.clone();
    for c in 0..labels.n_classes() {
        for t in 0..labels.n_frames() {
            let v = pattern.transform_vector(labels.vector(c, t));
            for (axis, value) in v.into_iter().enumerate() {
                out[[axis, c, t]] = value;
            }
        }
    }
    AccdoaTensor::from_array_unchecked(out)
}

pub fn channel_swap(
    features: &FeatureTensor,
    labels: &AccdoaTensor,
    pattern: &SwapPattern,
) -> (FeatureTensor, AccdoaTensor) {
    (swap_features(features, pattern), swap_labels(labels, pattern))
}

/// Realizes the pattern on a waveform: W unchanged, X/Y permuted and
/// sign-flipped, Z sign-flipped.
pub fn apply_pattern_to_waveform(clip: &MultichannelClip, pattern: &SwapPattern) -> MultichannelClip {
    let m = pattern.xy_map();
    let src = clip.samples();
    let mut out = src.clone();
    let (from_x, from_y) = if m.swap { (CH_Y, CH_X) } else { (CH_X, CH_Y) };
    let sx = m.sign_x as f32;
    let sy = m.sign_y as f32;
    let sz = pattern.z_sign() as f32;
    out.row_mut(CH_X).assign(&src.row(from_x).mapv(|v| sx * v));
    out.row_mut(CH_Y).assign(&src.row(from_y).mapv(|v| sy * v));
    out.row_mut(CH_Z).assign(&src.row(CH_Z).mapv(|v| sz * v));
    MultichannelClip::new(out).expect("channel swap preserves clip validity")
}
