//! Feature/label co-augmentation on the channel, frequency and time axes,
//! plus moderate mixup and the composed stochastic pipeline.
//!
//! Frame shift and time masking operate on aligned pairs where the feature
//! tensor has exactly `8 * T_label` frames; [`align_features`] crops a
//! freshly extracted tensor to that length.

mod config;
mod swap;

pub use config::{AugmentConfig, AugmentMode, CONFIG_KEYS};
pub use swap::{
    apply_pattern_to_waveform, channel_swap, enumerate_swap_patterns, swap_features, swap_labels,
    SwapPattern, XyMap,
};

use ndarray::{s, Array3, Axis};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::accdoa::AccdoaTensor;
use crate::error::{Result, SeldError};
use crate::features::FeatureTensor;
use crate::FRAMES_PER_LABEL;

/// Deterministic random stream keyed by a 64-bit seed (ChaCha8).
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for item `index` of a batch under the same seed.
    pub fn fork(&self, index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(index.wrapping_add(1));
        Self {
            seed: self.seed,
            inner,
        }
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn check_aligned(features: &FeatureTensor, labels: &AccdoaTensor) -> Result<()> {
    if features.n_frames() != FRAMES_PER_LABEL * labels.n_frames() {
        return Err(SeldError::ShapeMismatch(format!(
            "{} feature frames do not align with {} label frames",
            features.n_frames(),
            labels.n_frames()
        )));
    }
    Ok(())
}

/// Crops trailing feature frames so the tensor holds exactly
/// `8 * label_frames` frames. Only the floor-division remainder may be cut.
pub fn align_features(features: &FeatureTensor, label_frames: usize) -> Result<FeatureTensor> {
    let target = FRAMES_PER_LABEL * label_frames;
    let have = features.n_frames();
    if have < target || have >= target + FRAMES_PER_LABEL {
        return Err(SeldError::ShapeMismatch(format!(
            "{have} feature frames cannot cover exactly {label_frames} label frames"
        )));
    }
    if have == target {
        return Ok(features.clone());
    }
    Ok(FeatureTensor::from_array_unchecked(
        features.data().slice(s![.., .., ..target]).to_owned(),
    ))
}

/// Shifts every channel along frequency by `shift` bins (positive moves
/// content up). Vacated rows repeat the nearest edge row.
pub fn pitch_shift(features: &FeatureTensor, shift: i64, range: usize) -> Result<FeatureTensor> {
    if shift.unsigned_abs() as usize > range {
        return Err(SeldError::ShiftOutOfRange { shift, range });
    }
    let src = features.data();
    let n_freq = src.dim().1 as i64;
    let mut out = Array3::<f32>::zeros(src.dim());
    for f in 0..n_freq {
        let from = (f - shift).clamp(0, n_freq - 1);
        out.index_axis_mut(Axis(1), f as usize)
            .assign(&src.index_axis(Axis(1), from as usize));
    }
    Ok(FeatureTensor::from_array_unchecked(out))
}

fn roll_time<T: Clone + Default>(data: &Array3<T>, offset: usize) -> Array3<T> {
    let n = data.dim().2;
    let mut out = Array3::<T>::default(data.dim());
    if n == 0 {
        return out;
    }
    for t in 0..n {
        out.index_axis_mut(Axis(2), (t + offset) % n)
            .assign(&data.index_axis(Axis(2), t));
    }
    out
}

/// Circular shift along time by `offset` feature frames; labels move by
/// `offset / 8` label frames.
pub fn frame_shift(
    features: &FeatureTensor,
    labels: &AccdoaTensor,
    offset: i64,
) -> Result<(FeatureTensor, AccdoaTensor)> {
    if offset % FRAMES_PER_LABEL as i64 != 0 {
        return Err(SeldError::NonAlignedOffset(offset));
    }
    check_aligned(features, labels)?;
    let span = features.n_frames() as i64;
    if span == 0 {
        return Ok((features.clone(), labels.clone()));
    }
    let feat_offset = offset.rem_euclid(span) as usize;
    let label_offset = feat_offset / FRAMES_PER_LABEL;
    Ok((
        FeatureTensor::from_array_unchecked(roll_time(features.data(), feat_offset)),
        AccdoaTensor::from_array_unchecked(roll_time(labels.data(), label_offset)),
    ))
}

/// Zeroes feature frames `[start, start + len)` and the label frames they
/// cover. `len / T` must lie within `ratio_range` and both ends must fall
/// on label-frame boundaries.
pub fn time_mask(
    features: &FeatureTensor,
    labels: &AccdoaTensor,
    start: usize,
    len: usize,
    ratio_range: (f64, f64),
) -> Result<(FeatureTensor, AccdoaTensor)> {
    check_aligned(features, labels)?;
    let total = features.n_frames();
    let end = start + len;
    if end > total || start % FRAMES_PER_LABEL != 0 || len % FRAMES_PER_LABEL != 0 {
        return Err(SeldError::Misaligned { start, end });
    }
    let ratio = if total == 0 { 0.0 } else { len as f64 / total as f64 };
    let (min, max) = ratio_range;
    if ratio < min - 1e-12 || ratio > max + 1e-12 {
        return Err(SeldError::RatioOutOfRange { ratio, min, max });
    }
    let mut feat = features.data().clone();
    feat.slice_mut(s![.., .., start..end]).fill(0.0);
    let mut lab = labels.data().clone();
    lab.slice_mut(s![.., .., start / FRAMES_PER_LABEL..end / FRAMES_PER_LABEL])
        .fill(0.0);
    Ok((
        FeatureTensor::from_array_unchecked(feat),
        AccdoaTensor::from_array_unchecked(lab),
    ))
}

/// Mixes features linearly and keeps the dominant sample's labels whole:
/// `lab_a` when `lambda >= 0.5`, else `lab_b`.
pub fn moderate_mixup(
    feat_a: &FeatureTensor,
    lab_a: &AccdoaTensor,
    feat_b: &FeatureTensor,
    lab_b: &AccdoaTensor,
    lambda: f64,
) -> Result<(FeatureTensor, AccdoaTensor)> {
    if feat_a.data().dim() != feat_b.data().dim() || lab_a.data().dim() != lab_b.data().dim() {
        return Err(SeldError::ShapeMismatch(format!(
            "mixup pair {:?}/{:?} vs {:?}/{:?}",
            feat_a.data().dim(),
            lab_a.data().dim(),
            feat_b.data().dim(),
            lab_b.data().dim()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(SeldError::InvalidConfig(format!("lambda {lambda} not in [0, 1]")));
    }
    let mut mixed = feat_a.data().clone();
    mixed.zip_mut_with(feat_b.data(), |a, &b| {
        *a = (lambda * *a as f64 + (1.0 - lambda) * b as f64) as f32;
    });
    let label = if lambda >= 0.5 { lab_a } else { lab_b };
    Ok((FeatureTensor::from_array_unchecked(mixed), label.clone()))
}

/// Draws a mixing ratio from Beta(alpha, alpha).
pub fn sample_lambda<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> Result<f64> {
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| SeldError::InvalidConfig(format!("beta alpha {alpha}: {e}")))?;
    Ok(beta.sample(rng).clamp(0.0, 1.0))
}

/// A feature tensor with its ACCDOA targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureTensor,
    pub labels: AccdoaTensor,
}

/// Which random decisions the pipeline took.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentTrace {
    pub swap_pattern: Option<usize>,
    pub freq_shift: i64,
    pub frame_offset: Option<i64>,
    /// (start, len) in feature frames.
    pub mask: Option<(usize, usize)>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub sample: Sample,
    pub trace: AugmentTrace,
}

/// Channel swap -> frequency shift -> frame shift and/or time mask (per
/// mode) -> moderate mixup with `partner`. Features are first cropped to
/// align with the labels. Mixup is skipped when no partner is given.
pub fn augment_pipeline(
    sample: &Sample,
    partner: Option<&Sample>,
    config: &AugmentConfig,
    rng: &mut SeededRng,
) -> Result<Augmented> {
    config.validate()?;
    let mut trace = AugmentTrace::default();
    let mut features = align_features(&sample.features, sample.labels.n_frames())?;
    let mut labels = sample.labels.clone();

    if config.cs_prob > 0.0 && rng.random_bool(config.cs_prob) {
        let pattern = SwapPattern::from_index(rng.random_range(0..SwapPattern::COUNT));
        (features, labels) = channel_swap(&features, &labels, &pattern);
        trace.swap_pattern = Some(pattern.index());
    }

    if config.ps_range > 0 {
        let range = config.ps_range as i64;
        let shift = rng.random_range(-range..=range);
        features = pitch_shift(&features, shift, config.ps_range)?;
        trace.freq_shift = shift;
    }

    let label_frames = labels.n_frames();
    if config.frame_shift_active() && label_frames > 0 && rng.random_bool(config.fs_prob) {
        let offset = (rng.random_range(0..label_frames) * FRAMES_PER_LABEL) as i64;
        (features, labels) = frame_shift(&features, &labels, offset)?;
        trace.frame_offset = Some(offset);
    }

    if config.time_mask_active() && label_frames > 0 && rng.random_bool(config.tm_prob) {
        let lo = (config.tm_ratio_min * label_frames as f64 - 1e-9).ceil() as usize;
        let hi = (config.tm_ratio_max * label_frames as f64 + 1e-9).floor() as usize;
        let lo = lo.max(1);
        if lo <= hi {
            let ratio = rng.random_range(config.tm_ratio_min..=config.tm_ratio_max);
            let mask_labels = ((ratio * label_frames as f64).round() as usize).clamp(lo, hi);
            let start_label = rng.random_range(0..=label_frames - mask_labels);
            let start = start_label * FRAMES_PER_LABEL;
            let len = mask_labels * FRAMES_PER_LABEL;
            (features, labels) = time_mask(
                &features,
                &labels,
                start,
                len,
                (config.tm_ratio_min, config.tm_ratio_max),
            )?;
            trace.mask = Some((start, len));
        }
    }

    if let Some(partner) = partner {
        if config.mm_prob > 0.0 && rng.random_bool(config.mm_prob) {
            let partner_features =
                align_features(&partner.features, partner.labels.n_frames())?;
            let lambda = sample_lambda(rng, config.mm_beta_alpha)?;
            (features, labels) =
                moderate_mixup(&features, &labels, &partner_features, &partner.labels, lambda)?;
            trace.lambda = Some(lambda);
        }
    }

    Ok(Augmented {
        sample: Sample { features, labels },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accdoa::encode;
    use crate::dataset_io::{EventList, EventRecord};
    use proptest::prelude::*;
    use rand::{Rng, RngCore};

    fn random_sample(rng: &mut ChaCha8Rng, label_frames: usize) -> Sample {
        let features = FeatureTensor::new(Array3::from_shape_fn(
            (7, 200, label_frames * FRAMES_PER_LABEL),
            |_| rng.random_range(-3.0f32..3.0),
        ))
        .unwrap();
        let mut records = Vec::new();
        for t in 0..label_frames {
            for c in 0..13 {
                if rng.random_bool(0.2) {
                    records.push(EventRecord::new(
                        t,
                        c,
                        rng.random_range(-180..180) as f64,
                        rng.random_range(-90..=90) as f64,
                    ));
                }
            }
        }
        let events = EventList::new(records, 13).unwrap();
        Sample {
            features,
            labels: encode(&events, label_frames, 13).unwrap(),
        }
    }

    fn label_norms_valid(labels: &AccdoaTensor) -> bool {
        (0..labels.n_classes()).all(|c| {
            (0..labels.n_frames()).all(|t| {
                let n = labels.norm(c, t);
                n == 0.0 || (n - 1.0).abs() < 1e-9
            })
        })
    }

    #[test]
    fn pitch_shift_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_sample(&mut rng, 2);
        assert_eq!(pitch_shift(&s.features, 0, 10).unwrap(), s.features);
        let up = pitch_shift(&s.features, 3, 10).unwrap();
        let (src, out) = (s.features.data(), up.data());
        for c in 0..7 {
            for t in 0..16 {
                for f in 0..200 {
                    let want = if f >= 3 { src[[c, f - 3, t]] } else { src[[c, 0, t]] };
                    assert_eq!(out[[c, f, t]], want);
                }
            }
        }
        let down = pitch_shift(&s.features, -4, 10).unwrap();
        assert_eq!(down.data()[[2, 199, 5]], src[[2, 199, 5]]);
        assert_eq!(down.data()[[2, 0, 5]], src[[2, 4, 5]]);
        assert!(matches!(
            pitch_shift(&s.features, 11, 10),
            Err(SeldError::ShiftOutOfRange { shift: 11, range: 10 })
        ));
    }

    #[test]
    fn pitch_shift_there_and_back_touches_only_edge_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_sample(&mut rng, 2);
        for k in 1..=10i64 {
            for sign in [1, -1] {
                let back = pitch_shift(&pitch_shift(&s.features, sign * k, 10).unwrap(), -sign * k, 10)
                    .unwrap();
                // recompute which rows differ
                let differing: Vec<usize> = (0..200)
                    .filter(|&f| {
                        back.data().index_axis(Axis(1), f) != s.features.data().index_axis(Axis(1), f)
                    })
                    .collect();
                assert!(differing.len() <= k as usize);
                let edge: Vec<usize> = if sign > 0 {
                    (200 - k as usize..200).collect()
                } else {
                    (0..k as usize).collect()
                };
                assert!(differing.iter().all(|f| edge.contains(f)));
            }
        }
    }

    #[test]
    fn frame_shift_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_sample(&mut rng, 6);
        let (f0, l0) = frame_shift(&s.features, &s.labels, 0).unwrap();
        assert_eq!((f0, l0), (s.features.clone(), s.labels.clone()));
        let (f1, l1) = frame_shift(&s.features, &s.labels, 48).unwrap();
        assert_eq!((f1, l1), (s.features.clone(), s.labels.clone()));
        assert!(matches!(
            frame_shift(&s.features, &s.labels, 5),
            Err(SeldError::NonAlignedOffset(5))
        ));
        let (f, l) = frame_shift(&s.features, &s.labels, 16).unwrap();
        assert_eq!(f.data()[[3, 7, 16]], s.features.data()[[3, 7, 0]]);
        assert_eq!(f.data()[[3, 7, 2]], s.features.data()[[3, 7, 34]]);
        assert_eq!(l.vector(4, 2), s.labels.vector(4, 0));
        let (fneg, _) = frame_shift(&s.features, &s.labels, -8).unwrap();
        assert_eq!(fneg.data()[[0, 0, 0]], s.features.data()[[0, 0, 8]]);
    }

    #[test]
    fn time_mask_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_sample(&mut rng, 100);
        assert_eq!(s.features.n_frames(), 800);
        let (f, l) = time_mask(&s.features, &s.labels, 160, 80, (0.05, 0.1)).unwrap();
        for t in 0..800 {
            let masked = (160..240).contains(&t);
            let frame_f = f.data().index_axis(Axis(2), t);
            if masked {
                assert!(frame_f.iter().all(|&v| v == 0.0));
            } else {
                assert_eq!(frame_f, s.features.data().index_axis(Axis(2), t));
            }
        }
        for t in 0..100 {
            let zeroed = (20..30).contains(&t);
            for c in 0..13 {
                if zeroed {
                    assert_eq!(l.norm(c, t), 0.0);
                } else {
                    assert_eq!(l.vector(c, t), s.labels.vector(c, t));
                }
            }
        }
        let (f0, l0) = time_mask(&s.features, &s.labels, 0, 0, (0.0, 0.1)).unwrap();
        assert_eq!((f0, l0), (s.features.clone(), s.labels.clone()));
        assert!(matches!(
            time_mask(&s.features, &s.labels, 0, 0, (0.05, 0.1)),
            Err(SeldError::RatioOutOfRange { .. })
        ));
        assert!(matches!(
            time_mask(&s.features, &s.labels, 4, 80, (0.05, 0.1)),
            Err(SeldError::Misaligned { .. })
        ));
        assert!(matches!(
            time_mask(&s.features, &s.labels, 760, 80, (0.05, 0.1)),
            Err(SeldError::Misaligned { .. })
        ));
    }

    #[test]
    fn mixup_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_sample(&mut rng, 3);
        let b = random_sample(&mut rng, 3);
        let (f1, l1) = moderate_mixup(&a.features, &a.labels, &b.features, &b.labels, 1.0).unwrap();
        assert_eq!((f1, l1), (a.features.clone(), a.labels.clone()));
        let (f0, l0) = moderate_mixup(&a.features, &a.labels, &b.features, &b.labels, 0.0).unwrap();
        assert_eq!((f0, l0), (b.features.clone(), b.labels.clone()));
        let (f, l) = moderate_mixup(&a.features, &a.labels, &b.features, &b.labels, 0.7).unwrap();
        assert!(l.data().iter().zip(a.labels.data().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(label_norms_valid(&l));
        let want = 0.7 * a.features.data()[[1, 2, 3]] as f64 + 0.3 * b.features.data()[[1, 2, 3]] as f64;
        assert_eq!(f.data()[[1, 2, 3]], want as f32);
        let (_, tie) = moderate_mixup(&a.features, &a.labels, &b.features, &b.labels, 0.5).unwrap();
        assert_eq!(tie, a.labels);

        let short = random_sample(&mut rng, 2);
        assert!(matches!(
            moderate_mixup(&a.features, &a.labels, &short.features, &short.labels, 0.5),
            Err(SeldError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn lambda_distribution() {
        let mut rng = SeededRng::new(17);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_lambda(&mut rng, 0.2).unwrap()).collect();
        assert!(draws.iter().all(|l| (0.0..=1.0).contains(l)));
        let middle = draws.iter().filter(|l| (0.4..=0.6).contains(*l)).count() as f64 / 1e5;
        assert!(middle < 0.12, "middle mass {middle}");

        let uniform: Vec<f64> = (0..100_000).map(|_| sample_lambda(&mut rng, 1.0).unwrap()).collect();
        let mean = uniform.iter().sum::<f64>() / 1e5;
        assert!((mean - 0.5).abs() < 0.01);
        assert!(sample_lambda(&mut rng, 0.0).is_err());
    }

    #[test]
    fn align_crops_remainder_only() {
        let f = FeatureTensor::new(Array3::zeros((7, 200, 159))).unwrap();
        assert_eq!(align_features(&f, 19).unwrap().n_frames(), 152);
        assert!(align_features(&f, 20).is_err());
        assert!(align_features(&f, 18).is_err());
    }

    #[test]
    fn identity_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_sample(&mut rng, 5);
        let b = random_sample(&mut rng, 5);
        let out = augment_pipeline(&a, Some(&b), &AugmentConfig::identity(), &mut SeededRng::new(1))
            .unwrap();
        assert_eq!(out.sample, a);
        assert_eq!(out.trace, AugmentTrace::default());
    }

    #[test]
    fn pipeline_is_deterministic_and_seed_sensitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_sample(&mut rng, 10);
        let b = random_sample(&mut rng, 10);
        let config = AugmentConfig {
            cs_prob: 1.0,
            fs_prob: 1.0,
            mm_prob: 1.0,
            ..AugmentConfig::default()
        };
        let run = |seed| augment_pipeline(&a, Some(&b), &config, &mut SeededRng::new(seed)).unwrap();
        let (x, y) = (run(17), run(17));
        assert_eq!(x.trace, y.trace);
        assert!(x
            .sample
            .features
            .data()
            .iter()
            .zip(y.sample.features.data().iter())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_ne!(run(17).sample, run(18).sample);
    }

    #[test]
    fn pipeline_swap_patterns_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_sample(&mut rng, 1);
        let config = AugmentConfig {
            cs_prob: 1.0,
            ps_range: 0,
            fs_prob: 0.0,
            mm_prob: 0.0,
            ..AugmentConfig::default()
        };
        let mut counts = [0usize; 16];
        let mut seeded = SeededRng::new(17);
        let trials = 16_000;
        for _ in 0..trials {
            let out = augment_pipeline(&a, None, &config, &mut seeded).unwrap();
            counts[out.trace.swap_pattern.unwrap()] += 1;
        }
        let expected = trials as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 15 dof, p = 0.001 critical value
        assert!(chi2 < 37.7, "chi2 {chi2}");
        assert!(counts.iter().all(|&c| (c as f64 / trials as f64 - 1.0 / 16.0).abs() < 0.01));
    }

    #[test]
    fn pipeline_time_mask_respects_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_sample(&mut rng, 40);
        let config = AugmentConfig {
            cs_prob: 0.0,
            ps_range: 0,
            tm_prob: 1.0,
            mm_prob: 0.0,
            mode: AugmentMode::TmMm,
            ..AugmentConfig::default()
        };
        let mut seeded = SeededRng::new(3);
        for _ in 0..50 {
            let out = augment_pipeline(&a, None, &config, &mut seeded).unwrap();
            let (start, len) = out.trace.mask.unwrap();
            let ratio = len as f64 / 320.0;
            assert!((0.05..=0.1).contains(&ratio));
            assert_eq!(start % 8, 0);
            assert!(out.trace.frame_offset.is_none());
        }
    }

    #[test]
    fn fork_gives_distinct_reproducible_streams() {
        let base = SeededRng::new(5);
        let mut a = base.fork(0);
        let mut b = base.fork(1);
        let mut a2 = base.fork(0);
        let x = a.next_u64();
        assert_eq!(x, a2.next_u64());
        assert_ne!(x, b.next_u64());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn frame_shift_composes(seed in any::<u64>(), a in -12i64..12, b in -12i64..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_sample(&mut rng, 5);
            let (a, b) = (a * 8, b * 8);
            let (f1, l1) = frame_shift(&s.features, &s.labels, a).unwrap();
            let (f2, l2) = frame_shift(&f1, &l1, b).unwrap();
            let (f3, l3) = frame_shift(&s.features, &s.labels, (a + b).rem_euclid(40)).unwrap();
            prop_assert_eq!(f2, f3);
            prop_assert_eq!(l2, l3);
        }

        #[test]
        fn mask_then_shift_equals_shift_then_mask(seed in any::<u64>(), start in 0usize..8, shift in 0usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_sample(&mut rng, 20);
            let (start, len, offset) = (start * 8, 16, shift * 8);
            prop_assume!(start + offset + len <= 160);
            let range = (0.05, 0.1);
            let (fm, lm) = time_mask(&s.features, &s.labels, start, len, range).unwrap();
            let (a_f, a_l) = frame_shift(&fm, &lm, offset as i64).unwrap();
            let (fs, ls) = frame_shift(&s.features, &s.labels, offset as i64).unwrap();
            let (b_f, b_l) = time_mask(&fs, &ls, start + offset, len, range).unwrap();
            prop_assert_eq!(a_f, b_f);
            prop_assert_eq!(a_l, b_l);
        }

        #[test]
        fn pipeline_preserves_label_validity(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_sample(&mut rng, 12);
            let b = random_sample(&mut rng, 12);
            let config = AugmentConfig { mode: AugmentMode::All, cs_prob: 0.8, fs_prob: 0.8, tm_prob: 0.8, mm_prob: 0.8, ..AugmentConfig::default() };
            let out = augment_pipeline(&a, Some(&b), &config, &mut SeededRng::new(seed)).unwrap();
            prop_assert!(label_norms_valid(&out.sample.labels));
        }

        #[test]
        fn mixup_label_vectors_come_from_inputs(seed in any::<u64>(), lambda in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_sample(&mut rng, 4);
            let b = random_sample(&mut rng, 4);
            let (_, l) = moderate_mixup(&a.features, &a.labels, &b.features, &b.labels, lambda).unwrap();
            for c in 0..13 {
                for t in 0..4 {
                    let v = l.vector(c, t);
                    prop_assert!(v == a.labels.vector(c, t) || v == b.labels.vector(c, t));
                }
            }
        }
    }
}
