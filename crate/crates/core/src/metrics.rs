//! Segment-based joint localization and detection scores.
//!
//! Events are pooled into 1 s segments (10 label frames). Within each
//! (segment, class) cell, predicted and reference directions are paired by
//! minimum total angular distance. Pairs closer than the spatial threshold
//! are true positives; farther pairs count as one false positive and one
//! false negative but still feed the localization error and recall.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;

use crate::accdoa::{decode, doa_to_unit_vector, AccdoaTensor};
use crate::dataset_io::EventList;
use crate::error::{Result, SeldError};
use crate::N_CLASSES;

pub const DEFAULT_SPATIAL_THRESHOLD: f64 = 20.0;
/// Label frames per scoring segment.
pub const SEGMENT_LEN: usize = 10;
/// Localization error reported for a class with no matched pairs.
pub const NO_MATCH_ERROR: f64 = 180.0;
pub const SWEEP_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

/// Angle between two nonzero vectors in degrees.
///
/// Equal to `acos(clamp(v1.v2 / (|v1||v2|), -1, 1))`; evaluated as
/// `atan2(|v1 x v2|, v1.v2)`, which keeps full precision near 0 and 180.
pub fn angular_distance(v1: [f64; 3], v2: [f64; 3]) -> Result<f64> {
    let zero = |v: [f64; 3]| v.iter().all(|&c| c == 0.0);
    if zero(v1) || zero(v2) {
        return Err(SeldError::ZeroVector);
    }
    let dot = v1[0] * v2[0] + v1[1] * v2[1] + v1[2] * v2[2];
    let cross = [
        v1[1] * v2[2] - v1[2] * v2[1],
        v1[2] * v2[0] - v1[0] * v2[2],
        v1[0] * v2[1] - v1[1] * v2[0],
    ];
    let cross_norm = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    Ok(cross_norm.atan2(dot).to_degrees())
}

/// A direction as (azimuth, elevation) in degrees.
pub type Doa = (f64, f64);

fn doa_distance(a: Doa, b: Doa) -> f64 {
    let va = doa_to_unit_vector(a.0, a.1).expect("event elevations are validated");
    let vb = doa_to_unit_vector(b.0, b.1).expect("event elevations are validated");
    angular_distance(va, vb).expect("unit vectors are nonzero")
}

/// Distinct directions per (segment, class).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentView {
    cells: BTreeMap<(usize, usize), Vec<Doa>>,
}

impl SegmentView {
    pub fn cell(&self, segment: usize, class: usize) -> &[Doa] {
        self.cells.get(&(segment, class)).map_or(&[], Vec::as_slice)
    }

    /// Occupied `(segment, class)` keys in order.
    pub fn keys(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
}

fn same_doa(a: Doa, b: Doa) -> bool {
    // `==` so that 0.0 and -0.0 collapse
    a.0 == b.0 && a.1 == b.1
}

pub fn segment_events(events: &EventList, segment_len: usize) -> SegmentView {
    let segment_len = segment_len.max(1);
    let mut cells: BTreeMap<(usize, usize), Vec<Doa>> = BTreeMap::new();
    for ev in events {
        let cell = cells.entry((ev.frame / segment_len, ev.class_id)).or_default();
        let doa = (ev.azimuth, ev.elevation);
        if !cell.iter().any(|&d| same_doa(d, doa)) {
            cell.push(doa);
        }
    }
    SegmentView { cells }
}

/// Minimum-cost assignment on a rectangular cost matrix. Returns
/// `min(rows, cols)` pairs `(row, col)` sorted by row.
pub fn hungarian(cost: &Array2<f64>) -> Vec<(usize, usize)> {
    let (rows, cols) = cost.dim();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let mut pairs: Vec<(usize, usize)> = hungarian(&cost.t().to_owned())
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        return pairs;
    }
    // Shortest augmenting path with potentials; 1-based with a dummy column 0.
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Assignment between the predicted and reference directions of one cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellMatch {
    /// (pred index, ref index, angular distance in degrees).
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_preds: usize,
    pub unmatched_refs: usize,
}

impl CellMatch {
    pub fn total_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }
}

pub fn match_cell(preds: &[Doa], refs: &[Doa]) -> CellMatch {
    let cost = Array2::from_shape_fn((preds.len(), refs.len()), |(i, j)| doa_distance(preds[i], refs[j]));
    let pairs: Vec<(usize, usize, f64)> = hungarian(&cost)
        .into_iter()
        .map(|(i, j)| (i, j, cost[[i, j]]))
        .collect();
    CellMatch {
        unmatched_preds: preds.len() - pairs.len(),
        unmatched_refs: refs.len() - pairs.len(),
        pairs,
    }
}

/// How class-wise F1, LE and LR are pooled. ER is always pooled over segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig {
    pub spatial_threshold: f64,
    pub segment_len: usize,
    pub averaging: Averaging,
    pub n_classes: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            spatial_threshold: DEFAULT_SPATIAL_THRESHOLD,
            segment_len: SEGMENT_LEN,
            averaging: Averaging::Macro,
            n_classes: N_CLASSES,
        }
    }
}

/// Raw counts for one class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Reference directions over all segments.
    pub n_refs: usize,
    /// Class-matched pairs regardless of distance.
    pub n_matched: usize,
    pub distance_sum: f64,
}

impl ClassCounts {
    pub fn f1(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        (denom > 0).then(|| 100.0 * 2.0 * self.tp as f64 / denom as f64)
    }

    /// Mean matched distance, [`NO_MATCH_ERROR`] without matches, `None`
    /// for classes absent from the references.
    pub fn le(&self) -> Option<f64> {
        if self.n_refs == 0 {
            None
        } else if self.n_matched == 0 {
            Some(NO_MATCH_ERROR)
        } else {
            Some(self.distance_sum / self.n_matched as f64)
        }
    }

    pub fn lr(&self) -> Option<f64> {
        (self.n_refs > 0).then(|| 100.0 * self.n_matched as f64 / self.n_refs as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeldScores {
    /// Location-dependent error rate (ratio).
    pub er: f64,
    /// Location-dependent F1 (percent).
    pub f1: f64,
    /// Class-dependent localization error (degrees).
    pub le: f64,
    /// Class-dependent localization recall (percent).
    pub lr: f64,
    /// Set when there are no reference events, so ER has no denominator and
    /// is reported as 0.
    pub er_undefined: bool,
    pub averaging: Averaging,
    pub per_class: Vec<ClassCounts>,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub n_ref_total: usize,
}

impl SeldScores {
    /// `ER 0.00 F1 100.0 LE 0.0 LR 100.0`
    pub fn summary(&self) -> String {
        format!(
            "ER {:.2} F1 {:.1} LE {:.1} LR {:.1}",
            self.er, self.f1, self.le, self.lr
        )
    }

    /// CSV with one row per metric: `metric,value,class_0,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value");
        for c in 0..self.per_class.len() {
            let _ = write!(out, ",class_{c}");
        }
        out.push('\n');
        let cell = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        let rows: [(&str, f64, Box<dyn Fn(&ClassCounts) -> Option<f64>>); 4] = [
            ("er", self.er, Box::new(|_| None)),
            ("f1", self.f1, Box::new(ClassCounts::f1)),
            ("le", self.le, Box::new(ClassCounts::le)),
            ("lr", self.lr, Box::new(ClassCounts::lr)),
        ];
        for (name, value, per_class) in rows.iter() {
            let _ = write!(out, "{name},{value:.6}");
            for counts in &self.per_class {
                let _ = write!(out, ",{}", cell(per_class(counts)));
            }
            out.push('\n');
        }
        out
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn compute_seld_scores(preds: &EventList, refs: &EventList) -> SeldScores {
    compute_seld_scores_with(preds, refs, &ScoringConfig::default())
}

pub fn compute_seld_scores_with(preds: &EventList, refs: &EventList, config: &ScoringConfig) -> SeldScores {
    let pred_view = segment_events(preds, config.segment_len);
    let ref_view = segment_events(refs, config.segment_len);
    let max_class = pred_view
        .keys()
        .chain(ref_view.keys())
        .map(|(_, c)| c + 1)
        .max()
        .unwrap_or(0);
    let mut per_class = vec![ClassCounts::default(); config.n_classes.max(max_class)];

    // segment -> (fp, fn, n_refs)
    let mut per_segment: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    let mut keys: Vec<(usize, usize)> = pred_view.keys().chain(ref_view.keys()).collect();
    keys.sort_unstable();
    keys.dedup();
    for (segment, class) in keys {
        let (p, r) = (pred_view.cell(segment, class), ref_view.cell(segment, class));
        let matched = match_cell(p, r);
        let counts = &mut per_class[class];
        let seg = per_segment.entry(segment).or_default();
        let close = matched
            .pairs
            .iter()
            .filter(|pair| pair.2 < config.spatial_threshold)
            .count();
        let far = matched.pairs.len() - close;
        let fp = far + matched.unmatched_preds;
        let fn_ = far + matched.unmatched_refs;
        counts.tp += close;
        counts.fp += fp;
        counts.fn_ += fn_;
        counts.n_refs += r.len();
        counts.n_matched += matched.pairs.len();
        counts.distance_sum += matched.total_distance();
        seg.0 += fp;
        seg.1 += fn_;
        seg.2 += r.len();
    }

    let (mut subs, mut dels, mut ins, mut n_total) = (0, 0, 0, 0);
    for &(fp, fn_, n) in per_segment.values() {
        subs += fp.min(fn_);
        dels += fn_.saturating_sub(fp);
        ins += fp.saturating_sub(fn_);
        n_total += n;
    }
    let er_undefined = n_total == 0;
    let er = if er_undefined {
        0.0
    } else {
        (subs + dels + ins) as f64 / n_total as f64
    };

    let any_preds = !pred_view.is_empty();
    let (f1, le, lr) = match config.averaging {
        Averaging::Macro => (
            mean(per_class.iter().filter_map(ClassCounts::f1)),
            mean(per_class.iter().filter_map(ClassCounts::le)),
            mean(per_class.iter().filter_map(ClassCounts::lr)),
        ),
        Averaging::Micro => {
            let total = per_class.iter().fold(ClassCounts::default(), |acc, c| ClassCounts {
                tp: acc.tp + c.tp,
                fp: acc.fp + c.fp,
                fn_: acc.fn_ + c.fn_,
                n_refs: acc.n_refs + c.n_refs,
                n_matched: acc.n_matched + c.n_matched,
                distance_sum: acc.distance_sum + c.distance_sum,
            });
            (total.f1(), total.le(), total.lr())
        }
    };
    // No references: perfect when nothing was predicted either, worst otherwise.
    let (f1, le, lr) = match (f1, le, lr) {
        (f1, Some(le), Some(lr)) => (f1.unwrap_or(100.0), le, lr),
        (f1, _, _) if any_preds => (f1.unwrap_or(0.0), NO_MATCH_ERROR, 0.0),
        _ => (100.0, 0.0, 100.0),
    };

    SeldScores {
        er,
        f1,
        le,
        lr,
        er_undefined,
        averaging: config.averaging,
        per_class,
        substitutions: subs,
        deletions: dels,
        insertions: ins,
        n_ref_total: n_total,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub n_events: usize,
    pub scores: SeldScores,
}

/// Decodes `pred` at each threshold and scores it against `refs`.
pub fn threshold_sweep(
    pred: &AccdoaTensor,
    refs: &EventList,
    thresholds: &[f64],
    config: &ScoringConfig,
) -> Vec<SweepRow> {
    thresholds
        .iter()
        .map(|&threshold| {
            let decoded = decode(pred, threshold);
            SweepRow {
                threshold,
                n_events: decoded.len(),
                scores: compute_seld_scores_with(&decoded, refs, config),
            }
        })
        .collect()
}

/// Aligned plain-text table with one row per labelled score set.
pub fn format_table(rows: &[(String, &SeldScores)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("Setting".len());
    let mut out = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}\n",
        "Setting", "ER", "F1", "LE", "LR"
    );
    for (label, s) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.2}  {:>6.1}  {:>6.1}  {:>6.1}",
            label, s.er, s.f1, s.le, s.lr
        );
    }
    out
}

/// Sweep rows as CSV: `threshold,events,er,f1,le,lr`.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("threshold,events,er,f1,le,lr\n");
    for r in rows {
        let s = &r.scores;
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            r.threshold, r.n_events, s.er, s.f1, s.le, s.lr
        );
    }
    out
}
