//! Activity-coupled Cartesian DoA (ACCDOA) targets.
//!
//! Each (class, frame) cell holds a 3-vector whose direction is the DoA and
//! whose length is the activity. Ground truth cells are either zero or unit
//! length; predictions are decoded by thresholding the length.

use ndarray::Array3;

use crate::dataset_io::{wrap_azimuth, EventList, EventRecord, SlsaTensor};
use crate::error::{Result, SeldError};
use crate::FRAMES_PER_LABEL;

/// Cartesian axes per class, ordered (x, y, z).
pub const ACCDOA_AXES: usize = 3;
/// SED threshold on vector length.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Spherical (degrees) to Cartesian unit vector.
pub fn doa_to_unit_vector(azimuth_deg: f64, elevation_deg: f64) -> Result<[f64; 3]> {
    if !(-90.0..=90.0).contains(&elevation_deg) {
        return Err(SeldError::ElevationOutOfRange(elevation_deg));
    }
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    Ok([el.cos() * az.cos(), el.cos() * az.sin(), el.sin()])
}

/// Cartesian vector to (azimuth, elevation) in degrees; azimuth in
/// [-180, 180), and 0 at the poles.
pub fn unit_vector_to_doa(v: [f64; 3]) -> Result<(f64, f64)> {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(norm > 1e-9) {
        return Err(SeldError::ZeroVector);
    }
    let horizontal = v[0].hypot(v[1]);
    let azimuth = if horizontal <= 1e-12 * norm {
        0.0
    } else {
        wrap_azimuth(v[1].atan2(v[0]).to_degrees())
    };
    let elevation = v[2].atan2(horizontal).to_degrees();
    Ok((azimuth, elevation))
}

/// Dense ACCDOA tensor, shape (3, n_classes, T_label).
#[derive(Debug, Clone, PartialEq)]
pub struct AccdoaTensor {
    data: Array3<f64>,
}

impl AccdoaTensor {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.dim().0 != ACCDOA_AXES {
            return Err(SeldError::ShapeMismatch(format!(
                "ACCDOA tensor needs 3 axes, got {:?}",
                data.dim()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SeldError::NonFinite("ACCDOA tensor"));
        }
        Ok(Self { data })
    }

    pub fn zeros(n_classes: usize, n_frames: usize) -> Self {
        Self {
            data: Array3::zeros((ACCDOA_AXES, n_classes, n_frames)),
        }
    }

    pub(crate) fn from_array_unchecked(data: Array3<f64>) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn n_classes(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_frames(&self) -> usize {
        self.data.dim().2
    }

    pub fn vector(&self, class: usize, frame: usize) -> [f64; 3] {
        std::array::from_fn(|a| self.data[[a, class, frame]])
    }

    pub fn norm(&self, class: usize, frame: usize) -> f64 {
        let v = self.vector(class, frame);
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }

    /// Number of (class, frame) cells whose norm exceeds `threshold`.
    pub fn active_count(&self, threshold: f64) -> usize {
        (0..self.n_classes())
            .flat_map(|c| (0..self.n_frames()).map(move |t| (c, t)))
            .filter(|&(c, t)| self.norm(c, t) > threshold)
            .count()
    }

    pub fn to_slsa(&self) -> SlsaTensor {
        let (a, c, t) = self.data.dim();
        SlsaTensor {
            dims: vec![a, c, t],
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_slsa(tensor: SlsaTensor) -> Result<Self> {
        let dims: [usize; 3] = tensor.dims.as_slice().try_into().map_err(|_| {
            SeldError::ShapeMismatch(format!("expected 3 dims, got {:?}", tensor.dims))
        })?;
        let data = Array3::from_shape_vec(dims, tensor.data.into_iter().map(f64::from).collect())
            .map_err(|e| SeldError::ShapeMismatch(e.to_string()))?;
        Self::new(data)
    }
}

/// Label frames covered by `feature_frames` feature frames (floor division).
pub fn label_frames_for(feature_frames: usize) -> usize {
    feature_frames / FRAMES_PER_LABEL
}

pub fn encode(events: &EventList, n_frames: usize, n_classes: usize) -> Result<AccdoaTensor> {
    let mut data = Array3::<f64>::zeros((ACCDOA_AXES, n_classes, n_frames));
    let mut occupied = vec![false; n_classes * n_frames];
    for ev in events {
        if ev.class_id >= n_classes {
            return Err(SeldError::ClassOutOfRange {
                class: ev.class_id,
                n_classes,
            });
        }
        if ev.frame >= n_frames {
            return Err(SeldError::FrameOutOfRange {
                frame: ev.frame,
                n_frames,
            });
        }
        let slot = &mut occupied[ev.class_id * n_frames + ev.frame];
        if *slot {
            return Err(SeldError::SameClassOverlap {
                frame: ev.frame,
                class: ev.class_id,
            });
        }
        *slot = true;
        let v = doa_to_unit_vector(ev.azimuth, ev.elevation)?;
        for (axis, value) in v.into_iter().enumerate() {
            data[[axis, ev.class_id, ev.frame]] = value;
        }
    }
    Ok(AccdoaTensor { data })
}

/// Cells with norm strictly greater than `threshold` become events.
pub fn decode(tensor: &AccdoaTensor, threshold: f64) -> EventList {
    let mut records = Vec::new();
    for frame in 0..tensor.n_frames() {
        for class in 0..tensor.n_classes() {
            if tensor.norm(class, frame) > threshold {
                if let Ok((az, el)) = unit_vector_to_doa(tensor.vector(class, frame)) {
                    records.push(EventRecord::new(frame, class, az, el));
                }
            }
        }
    }
    EventList::new(records, tensor.n_classes()).expect("decoded events are in range")
}

/// Elementwise mean of identically shaped tensors.
pub fn ensemble_average(tensors: &[AccdoaTensor]) -> Result<AccdoaTensor> {
    let first = tensors.first().ok_or(SeldError::EmptyEnsemble)?;
    let mut sum = Array3::<f64>::zeros(first.data.dim());
    for t in tensors {
        if t.data.dim() != first.data.dim() {
            return Err(SeldError::ShapeMismatch(format!(
                "ensemble member {:?} vs {:?}",
                t.data.dim(),
                first.data.dim()
            )));
        }
        sum += &t.data;
    }
    sum /= tensors.len() as f64;
    Ok(AccdoaTensor { data: sum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close3(a: [f64; 3], b: [f64; 3]) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn axis_and_pole_cases() {
        assert!(close3(doa_to_unit_vector(0.0, 0.0).unwrap(), [1.0, 0.0, 0.0]));
        assert!(close3(doa_to_unit_vector(90.0, 0.0).unwrap(), [0.0, 1.0, 0.0]));
        assert!(close3(doa_to_unit_vector(0.0, 90.0).unwrap(), [0.0, 0.0, 1.0]));
        assert!(matches!(
            doa_to_unit_vector(0.0, 91.0),
            Err(SeldError::ElevationOutOfRange(_))
        ));
    }

    #[test]
    fn inverse_map() {
        assert_eq!(unit_vector_to_doa([0.0, 1.0, 0.0]).unwrap(), (90.0, 0.0));
        assert_eq!(unit_vector_to_doa([0.0, 0.0, -1.0]).unwrap(), (0.0, -90.0));
        assert_eq!(unit_vector_to_doa([-0.0, -0.0, 2.0]).unwrap(), (0.0, 90.0));
        assert_eq!(unit_vector_to_doa([-1.0, 0.0, 0.0]).unwrap().0, -180.0);
        assert_eq!(unit_vector_to_doa([-1.0, -0.0, 0.0]).unwrap().0, -180.0);
        assert!(matches!(
            unit_vector_to_doa([0.0; 3]),
            Err(SeldError::ZeroVector)
        ));
        let (az, el) = unit_vector_to_doa(doa_to_unit_vector(123.0, -45.0).unwrap()).unwrap();
        assert!((az - 123.0).abs() < 1e-9 && (el + 45.0).abs() < 1e-9);
    }

    #[test]
    fn encode_cases() {
        let empty = encode(&EventList::empty(), 10, 13).unwrap();
        assert!(empty.data().iter().all(|&v| v == 0.0));

        let one = EventList::new(vec![EventRecord::new(5, 2, 0.0, 0.0)], 13).unwrap();
        let t = encode(&one, 10, 13).unwrap();
        assert_eq!(t.vector(2, 5), [1.0, 0.0, 0.0]);
        assert_eq!(t.data().iter().filter(|&&v| v != 0.0).count(), 1);

        let clash = EventList::new(
            vec![EventRecord::new(1, 4, 10.0, 0.0), EventRecord::new(1, 4, 50.0, 0.0)],
            13,
        )
        .unwrap();
        assert!(matches!(
            encode(&clash, 10, 13),
            Err(SeldError::SameClassOverlap { frame: 1, class: 4 })
        ));
        assert!(matches!(
            encode(&one, 5, 13),
            Err(SeldError::FrameOutOfRange { frame: 5, n_frames: 5 })
        ));
    }

    #[test]
    fn decode_threshold_boundary() {
        let mut data = Array3::zeros((3, 13, 2));
        data[[0, 1, 0]] = 0.6;
        data[[1, 2, 1]] = 0.5;
        let t = AccdoaTensor::new(data).unwrap();
        let ev = decode(&t, 0.5);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev.records()[0].frame, ev.records()[0].class_id), (0, 1));
    }

    #[test]
    fn ensemble_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = AccdoaTensor::new(Array3::from_shape_fn((3, 13, 7), |_| rng.random_range(-1.0..1.0)))
            .unwrap();
        let avg = ensemble_average(&[t.clone(), t.clone(), t.clone()]).unwrap();
        assert!(avg.data().iter().zip(t.data().iter()).all(|(a, b)| (a - b).abs() < 1e-15));

        let mut a = Array3::zeros((3, 13, 1));
        a[[0, 0, 0]] = 1.0;
        let b = a.mapv(|v: f64| -v);
        let cancel = ensemble_average(&[
            AccdoaTensor::new(a).unwrap(),
            AccdoaTensor::new(b).unwrap(),
        ])
        .unwrap();
        assert_eq!(cancel.norm(0, 0), 0.0);
        assert!(decode(&cancel, 1e-12).is_empty());

        assert!(matches!(ensemble_average(&[]), Err(SeldError::EmptyEnsemble)));
        assert!(matches!(
            ensemble_average(&[AccdoaTensor::zeros(13, 2), AccdoaTensor::zeros(13, 3)]),
            Err(SeldError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn ensemble_norm_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let members: Vec<AccdoaTensor> = (0..4)
                .map(|_| {
                    AccdoaTensor::new(Array3::from_shape_fn((3, 13, 5), |_| {
                        rng.random_range(-1.0..1.0)
                    }))
                    .unwrap()
                })
                .collect();
            let avg = ensemble_average(&members).unwrap();
            for c in 0..13 {
                for t in 0..5 {
                    let mean_of_norms =
                        members.iter().map(|m| m.norm(c, t)).sum::<f64>() / members.len() as f64;
                    // recompute the mean vector directly
                    let mean_vec: Vec<f64> = (0..3)
                        .map(|a| members.iter().map(|m| m.data()[[a, c, t]]).sum::<f64>() / 4.0)
                        .collect();
                    let norm_of_mean = mean_vec.iter().map(|v| v * v).sum::<f64>().sqrt();
                    assert!((avg.norm(c, t) - norm_of_mean).abs() < 1e-12);
                    assert!(mean_of_norms >= norm_of_mean - 1e-12);
                }
            }
        }
    }

    fn arb_events() -> impl Strategy<Value = EventList> {
        prop::collection::btree_map((0usize..30, 0usize..13), (-180i32..180, -89i32..=89), 0..60)
            .prop_map(|cells| {
                let records = cells
                    .into_iter()
                    .map(|((f, c), (a, e))| EventRecord::new(f, c, a as f64, e as f64))
                    .collect();
                EventList::new(records, 13).unwrap()
            })
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(events in arb_events(), threshold in 0.01f64..0.99) {
            let t = encode(&events, 30, 13).unwrap();
            for c in 0..13 {
                for f in 0..30 {
                    let n = t.norm(c, f);
                    prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
                }
            }
            prop_assert!(decode(&t, threshold).approx_eq(&events, 1e-9));
        }

        #[test]
        fn ensemble_is_permutation_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut members: Vec<AccdoaTensor> = (0..5)
                .map(|_| AccdoaTensor::new(Array3::from_shape_fn((3, 13, 3), |_| rng.random_range(-1.0..1.0))).unwrap())
                .collect();
            let a = ensemble_average(&members).unwrap();
            members.reverse();
            members.swap(0, 2);
            let b = ensemble_average(&members).unwrap();
            prop_assert!(a.data().iter().zip(b.data().iter()).all(|(x, y)| (x - y).abs() < 1e-15));
        }

        #[test]
        fn raising_threshold_never_adds_events(seed in any::<u64>(), lo in 0.05f64..0.9, gap in 0.0f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = AccdoaTensor::new(Array3::from_shape_fn((3, 13, 8), |_| rng.random_range(-0.8..0.8))).unwrap();
            let low = decode(&t, lo);
            let high = decode(&t, lo + gap);
            prop_assert!(high.iter().all(|h| low.iter().any(|l| l == h)));
        }
    }
}
