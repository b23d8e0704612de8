//! Deterministic synthetic FOA material: single plane waves and a small
//! two-class scene with a moving source.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset_io::{EventList, EventRecord, MultichannelClip};
use crate::{N_CLASSES, SAMPLE_RATE};

/// Samples per 100 ms label frame.
pub const SAMPLES_PER_LABEL: usize = SAMPLE_RATE as usize / 10;

/// FOA gains (W, Y, Z, X) of a plane wave arriving from (azimuth, elevation).
pub fn foa_gains(azimuth_deg: f64, elevation_deg: f64) -> [f64; 4] {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    [1.0, az.sin() * el.cos(), el.sin(), az.cos() * el.cos()]
}

/// White-noise plane wave from a single direction.
pub fn plane_wave_clip(azimuth_deg: f64, elevation_deg: f64, len: usize, seed: u64) -> MultichannelClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source: Vec<f64> = (0..len).map(|_| rng.random_range(-0.5..0.5)).collect();
    let gains = foa_gains(azimuth_deg, elevation_deg);
    let samples = Array2::from_shape_fn((4, len), |(c, i)| (source[i] * gains[c]) as f32);
    MultichannelClip::new(samples).expect("synthetic clip is valid")
}

/// A synthetic scene together with its reference labels.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub clip: MultichannelClip,
    pub events: EventList,
}

/// Two-second scene: class 3 static at (40, 10) for frames 0..10 and class 7
/// sweeping from -60 to +52 degrees azimuth over frames 4..=18. Frame 19 is
/// silent so every event falls inside the 19 label frames that 159 feature
/// frames cover.
pub fn demo_scene() -> SyntheticScene {
    let n_frames = 20;
    let mut records = Vec::new();
    for frame in 0..10 {
        records.push(EventRecord::new(frame, 3, 40.0, 10.0));
    }
    for frame in 4..=18 {
        let az = -60.0 + 8.0 * (frame as f64 - 4.0);
        records.push(EventRecord::new(frame, 7, az, 0.0));
    }
    let events = EventList::new(records, N_CLASSES).expect("demo labels are valid");
    let clip = render_scene(&events, n_frames, 2022);
    SyntheticScene { clip, events }
}

/// Renders each event as an independent noise burst filling its label frame.
pub fn render_scene(events: &EventList, n_frames: usize, seed: u64) -> MultichannelClip {
    let len = n_frames * SAMPLES_PER_LABEL;
    let mut samples = Array2::<f64>::zeros((4, len));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ev in events {
        let gains = foa_gains(ev.azimuth, ev.elevation);
        let start = ev.frame * SAMPLES_PER_LABEL;
        for i in start..(start + SAMPLES_PER_LABEL).min(len) {
            let s: f64 = rng.random_range(-0.25..0.25);
            for c in 0..4 {
                samples[[c, i]] += s * gains[c];
            }
        }
    }
    MultichannelClip::new(samples.mapv(|v| v as f32)).expect("rendered scene is valid")
}
