//! Per-frame feature extraction and corpus normalization.
//!
//! Each frame maps to 100 columns in a frozen order: the 75 raw scalars
//! (hand block first, then the five fingers), followed by 25 derived
//! columns grouped by finger. The five derived columns per finger are
//! computed from consecutive tip positions:
//!
//! * `tip_dist`  — Euclidean distance between consecutive tip positions
//! * `angle_xy`  — `atan2(dy, dx)` of the displacement, range (-pi, pi]
//! * `angle_xz`  — `atan2(dz, dx)` of the displacement
//! * `angle_3d`  — angle between consecutive 3D displacement vectors
//! * `curvature` — Menger curvature of three consecutive tip positions,
//!   `4 * area(p0, p1, p2) / (|p0-p1| |p1-p2| |p0-p2|)`
//!
//! Rows without enough predecessors (row 0 for all five, row 1 for
//! `angle_3d`/`curvature`) are defined as 0 so the matrix stays rectangular.
//! Categorical fields (hand type, tracker flags) enter as 0/1 columns.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gesture::{GestureType, RawSample, Vec3, FINGER_COUNT, FINGER_NAMES, RAW_FEATURES};

/// Total feature columns per frame.
pub const FRAME_FEATURES: usize = 100;
/// Derived columns per finger.
pub const DERIVED_PER_FINGER: usize = 5;

/// Standard deviations at or below this are treated as zero variance.
const ZERO_STD_EPS: f64 = 1e-12;

const HAND_COLUMNS: [&str; 20] = [
    "grab_strength",
    "pinch_strength",
    "pitch",
    "yaw",
    "roll",
    "palm_width",
    "palm_x",
    "palm_y",
    "palm_z",
    "arm_x",
    "arm_y",
    "arm_z",
    "wrist_x",
    "wrist_y",
    "wrist_z",
    "hand_type",
    "flag_circle",
    "flag_swipe",
    "flag_key_tap",
    "flag_screen_tap",
];

const FINGER_RAW_SUFFIXES: [&str; 11] = [
    "tip_x", "tip_y", "tip_z", "vel_x", "vel_y", "vel_z", "dir_x", "dir_y", "dir_z", "length",
    "width",
];

const FINGER_DERIVED_SUFFIXES: [&str; DERIVED_PER_FINGER] =
    ["tip_dist", "angle_xy", "angle_xz", "angle_3d", "curvature"];

/// The frozen names of the 100 feature columns, in column order.
pub fn column_names() -> &'static [String; FRAME_FEATURES] {
    static NAMES: OnceLock<[String; FRAME_FEATURES]> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names = Vec::with_capacity(FRAME_FEATURES);
        names.extend(HAND_COLUMNS.iter().map(|s| s.to_string()));
        for finger in FINGER_NAMES {
            for suffix in FINGER_RAW_SUFFIXES {
                names.push(format!("{finger}_{suffix}"));
            }
        }
        for finger in FINGER_NAMES {
            for suffix in FINGER_DERIVED_SUFFIXES {
                names.push(format!("{finger}_{suffix}"));
            }
        }
        names.try_into().expect("exactly 100 column names")
    })
}

/// First derived column for finger `f` (fingers in thumb..pinky order).
pub fn derived_column_base(finger: usize) -> usize {
    RAW_FEATURES + finger * DERIVED_PER_FINGER
}

/// An `N x 100` matrix of per-frame features for one sample, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub sample_id: String,
    rows: usize,
    data: Vec<f64>,
}

impl FeatureSequence {
    /// Builds a sequence from raw row data; `data.len()` must be a multiple
    /// of 100 and free of NaN/Inf.
    pub fn from_rows(sample_id: impl Into<String>, data: Vec<f64>) -> Result<FeatureSequence> {
        if data.is_empty() || data.len() % FRAME_FEATURES != 0 {
            return Err(Error::data(format!(
                "feature data length {} is not a positive multiple of {FRAME_FEATURES}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("feature matrix contains non-finite values"));
        }
        Ok(FeatureSequence { sample_id: sample_id.into(), rows: data.len() / FRAME_FEATURES, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * FRAME_FEATURES..(r + 1) * FRAME_FEATURES]
    }

    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.data[r * FRAME_FEATURES + c]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.value(r, c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(v: &Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Angle between two 3D vectors via `atan2(|a x b|, a . b)`; 0 when either
/// vector is zero.
fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    if norm3(a) == 0.0 || norm3(b) == 0.0 {
        return 0.0;
    }
    norm3(&cross3(a, b)).atan2(dot3(a, b))
}

/// Menger curvature of three points; 0 for degenerate triples.
fn menger_curvature(p0: &Vec3, p1: &Vec3, p2: &Vec3) -> f64 {
    let d01 = norm3(&sub3(p1, p0));
    let d12 = norm3(&sub3(p2, p1));
    let d02 = norm3(&sub3(p2, p0));
    if d01 == 0.0 || d12 == 0.0 || d02 == 0.0 {
        return 0.0;
    }
    let area2 = norm3(&cross3(&sub3(p1, p0), &sub3(p2, p0)));
    2.0 * area2 / (d01 * d12 * d02)
}

/// Extracts the `N x 100` feature matrix from a sample. Deterministic and
/// length-preserving: one output row per frame.
pub fn extract_features(sample: &RawSample) -> Result<FeatureSequence> {
    sample.validate()?;
    let n = sample.frames.len();
    let mut data = Vec::with_capacity(n * FRAME_FEATURES);
    for (t, frame) in sample.frames.iter().enumerate() {
        data.push(frame.grab_strength);
        data.push(frame.pinch_strength);
        data.push(frame.pitch);
        data.push(frame.yaw);
        data.push(frame.roll);
        data.push(frame.palm_width);
        data.extend_from_slice(&frame.palm_pos);
        data.extend_from_slice(&frame.arm_pos);
        data.extend_from_slice(&frame.wrist_pos);
        data.push(frame.hand_type.as_feature());
        data.extend_from_slice(&frame.gesture_flags.as_features());
        for finger in &frame.fingers {
            data.extend_from_slice(&finger.tip_pos);
            data.extend_from_slice(&finger.tip_velocity);
            data.extend_from_slice(&finger.tip_direction);
            data.push(finger.finger_length);
            data.push(finger.finger_width);
        }
        for f in 0..FINGER_COUNT {
            if t == 0 {
                data.extend_from_slice(&[0.0; DERIVED_PER_FINGER]);
                continue;
            }
            let p2 = &sample.frames[t].fingers[f].tip_pos;
            let p1 = &sample.frames[t - 1].fingers[f].tip_pos;
            let d = sub3(p2, p1);
            data.push(norm3(&d));
            data.push(d[1].atan2(d[0]));
            data.push(d[2].atan2(d[0]));
            if t >= 2 {
                let p0 = &sample.frames[t - 2].fingers[f].tip_pos;
                let d_prev = sub3(p1, p0);
                data.push(angle_between(&d_prev, &d));
                data.push(menger_curvature(p0, p1, p2));
            } else {
                data.push(0.0);
                data.push(0.0);
            }
        }
    }
    debug_assert_eq!(data.len(), n * FRAME_FEATURES);
    FeatureSequence::from_rows(sample.sample_id.clone(), data)
}

/// Per-column mean and population standard deviation of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits per-column z-score statistics over all rows of all sequences.
pub fn fit_normalizer(corpus: &[FeatureSequence]) -> Result<NormStats> {
    let total_rows: usize = corpus.iter().map(|s| s.rows()).sum();
    if total_rows == 0 {
        return Err(Error::degenerate("cannot fit normalizer on an empty corpus"));
    }
    let mut mean = vec![0.0; FRAME_FEATURES];
    for seq in corpus {
        for r in 0..seq.rows() {
            for (m, v) in mean.iter_mut().zip(seq.row(r)) {
                *m += v;
            }
        }
    }
    for m in &mut mean {
        *m /= total_rows as f64;
    }
    let mut var = vec![0.0; FRAME_FEATURES];
    for seq in corpus {
        for r in 0..seq.rows() {
            for ((v, x), m) in var.iter_mut().zip(seq.row(r)).zip(&mean) {
                let d = x - m;
                *v += d * d;
            }
        }
    }
    let std = var.into_iter().map(|v| (v / total_rows as f64).sqrt()).collect();
    Ok(NormStats { mean, std })
}

/// Applies z-score normalization; zero-variance columns map to 0.
pub fn apply_normalizer(seq: &FeatureSequence, stats: &NormStats) -> FeatureSequence {
    let mut data = Vec::with_capacity(seq.rows() * FRAME_FEATURES);
    for r in 0..seq.rows() {
        for (c, v) in seq.row(r).iter().enumerate() {
            if stats.std[c] <= ZERO_STD_EPS {
                data.push(0.0);
            } else {
                data.push((v - stats.mean[c]) / stats.std[c]);
            }
        }
    }
    FeatureSequence { sample_id: seq.sample_id.clone(), rows: seq.rows(), data }
}

/// A feature sequence together with the labels of the sample it came from.
#[derive(Debug, Clone)]
pub struct ExtractedSample {
    pub user_id: String,
    pub gesture: GestureType,
    pub batch: u32,
    pub seq: FeatureSequence,
}

/// Extracts every sample of a corpus, preserving order.
pub fn extract_corpus(samples: &[RawSample]) -> Result<Vec<ExtractedSample>> {
    samples
        .iter()
        .map(|s| {
            Ok(ExtractedSample {
                user_id: s.user_id.clone(),
                gesture: s.gesture,
                batch: s.batch,
                seq: extract_features(s)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::{FingerData, GestureFlags, HandType, RawFrame};
    use approx::assert_relative_eq;

    fn finger_at(pos: Vec3) -> FingerData {
        FingerData {
            tip_pos: pos,
            tip_velocity: [0.0; 3],
            tip_direction: [0.0; 3],
            finger_length: 55.0,
            finger_width: 11.0,
        }
    }

    fn frame_with_tips(tips: [Vec3; FINGER_COUNT]) -> RawFrame {
        RawFrame {
            grab_strength: 0.25,
            pinch_strength: 0.5,
            pitch: 0.1,
            yaw: -0.2,
            roll: 0.05,
            palm_width: 84.0,
            palm_pos: [1.0, 200.0, 3.0],
            arm_pos: [2.0, 120.0, 8.0],
            wrist_pos: [1.5, 160.0, 5.0],
            hand_type: HandType::Right,
            gesture_flags: GestureFlags { circle: true, ..GestureFlags::default() },
            fingers: [
                finger_at(tips[0]),
                finger_at(tips[1]),
                finger_at(tips[2]),
                finger_at(tips[3]),
                finger_at(tips[4]),
            ],
        }
    }

    fn sample_from_index_path(path: &[Vec3]) -> RawSample {
        let frames = path
            .iter()
            .map(|p| {
                let mut tips = [[0.0, 0.0, 0.0]; FINGER_COUNT];
                tips[crate::gesture::INDEX_FINGER] = *p;
                frame_with_tips(tips)
            })
            .collect();
        RawSample {
            sample_id: "s".into(),
            user_id: "u".into(),
            gesture: GestureType::Swipe,
            batch: 1,
            frames,
        }
    }

    #[test]
    fn column_catalog_is_complete() {
        let names = column_names();
        assert_eq!(names.len(), FRAME_FEATURES);
        assert_eq!(names[0], "grab_strength");
        assert_eq!(names[15], "hand_type");
        assert_eq!(names[20], "thumb_tip_x");
        assert_eq!(names[31], "index_tip_x");
        assert_eq!(names[75], "thumb_tip_dist");
        assert_eq!(names[derived_column_base(1)], "index_tip_dist");
        assert_eq!(names[99], "pinky_curvature");
        let mut unique: Vec<_> = names.iter().collect();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), FRAME_FEATURES);
    }

    #[test]
    fn stationary_hand_has_zero_derived_features() {
        let path = vec![[5.0, 6.0, 7.0]; 4];
        let seq = extract_features(&sample_from_index_path(&path)).unwrap();
        assert_eq!(seq.rows(), 4);
        for r in 0..seq.rows() {
            for c in RAW_FEATURES..FRAME_FEATURES {
                assert_eq!(seq.value(r, c), 0.0, "row {r} col {c}");
            }
        }
    }

    #[test]
    fn index_tip_motion_derived_columns() {
        // index tip moves (0,0,0) -> (3,4,0): distance 5, x-y angle atan2(4,3)
        let seq = extract_features(&sample_from_index_path(&[
            [0.0, 0.0, 0.0],
            [3.0, 4.0, 0.0],
        ]))
        .unwrap();
        let base = derived_column_base(crate::gesture::INDEX_FINGER);
        assert_relative_eq!(seq.value(1, base), 5.0);
        assert_relative_eq!(seq.value(1, base + 1), 4.0f64.atan2(3.0));
        assert_relative_eq!(seq.value(1, base + 2), 0.0f64.atan2(3.0));
        // no second displacement yet
        assert_eq!(seq.value(1, base + 3), 0.0);
        assert_eq!(seq.value(1, base + 4), 0.0);
        // row 0 has no predecessor
        for d in 0..DERIVED_PER_FINGER {
            assert_eq!(seq.value(0, base + d), 0.0);
        }
    }

    #[test]
    fn output_is_always_n_by_100() {
        for n in [2usize, 3, 7, 25] {
            let path: Vec<Vec3> = (0..n).map(|i| [i as f64, 2.0 * i as f64, 0.5]).collect();
            let seq = extract_features(&sample_from_index_path(&path)).unwrap();
            assert_eq!(seq.rows(), n);
            assert_eq!(seq.as_slice().len(), n * FRAME_FEATURES);
            assert!(seq.as_slice().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn right_angle_turn_measures_menger_curvature() {
        let seq = extract_features(&sample_from_index_path(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
        ]))
        .unwrap();
        let base = derived_column_base(crate::gesture::INDEX_FINGER);
        // right angle: area = 1/2, sides 1, 1, sqrt(2) -> curvature = sqrt(2)
        assert_relative_eq!(seq.value(2, base + 4), 2.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(seq.value(2, base + 3), std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn rejects_short_and_nonfinite_samples() {
        assert!(extract_features(&sample_from_index_path(&[[0.0; 3]])).is_err());
        let mut sample = sample_from_index_path(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        sample.frames[1].palm_pos[0] = f64::NAN;
        assert!(extract_features(&sample).is_err());
    }

    #[test]
    fn normalizer_matches_population_sigma() {
        // column of {1, 2, 3} -> {-1.2247, 0, 1.2247}
        let mut data = vec![0.0; 3 * FRAME_FEATURES];
        for (r, v) in [1.0, 2.0, 3.0].into_iter().enumerate() {
            data[r * FRAME_FEATURES] = v;
        }
        let seq = FeatureSequence::from_rows("s", data).unwrap();
        let stats = fit_normalizer(std::slice::from_ref(&seq)).unwrap();
        let normed = apply_normalizer(&seq, &stats);
        assert_relative_eq!(normed.value(0, 0), -1.224744871391589, epsilon = 1e-12);
        assert_relative_eq!(normed.value(1, 0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(normed.value(2, 0), 1.224744871391589, epsilon = 1e-12);
        // constant columns map to zero
        for c in 1..FRAME_FEATURES {
            assert_eq!(normed.value(0, c), 0.0);
        }
    }

    #[test]
    fn normalizing_twice_is_idempotent() {
        let mut data = vec![0.0; 4 * FRAME_FEATURES];
        for r in 0..4 {
            for c in 0..FRAME_FEATURES {
                data[r * FRAME_FEATURES + c] = ((r * 31 + c * 7) % 17) as f64 * 0.37 - 2.0;
            }
        }
        let seq = FeatureSequence::from_rows("s", data).unwrap();
        let stats = fit_normalizer(std::slice::from_ref(&seq)).unwrap();
        let once = apply_normalizer(&seq, &stats);
        let stats2 = fit_normalizer(std::slice::from_ref(&once)).unwrap();
        let twice = apply_normalizer(&once, &stats2);
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn fitted_corpus_is_standardized() {
        let mut seqs = Vec::new();
        for s in 0..3usize {
            let rows = 5 + s;
            let mut data = vec![0.0; rows * FRAME_FEATURES];
            for r in 0..rows {
                for c in 0..FRAME_FEATURES {
                    data[r * FRAME_FEATURES + c] =
                        (s as f64 + 1.0) * (r as f64 - 2.0) + (c as f64) * 0.01;
                }
            }
            seqs.push(FeatureSequence::from_rows(format!("s{s}"), data).unwrap());
        }
        let stats = fit_normalizer(&seqs).unwrap();
        let normed: Vec<_> = seqs.iter().map(|s| apply_normalizer(s, &stats)).collect();
        let total_rows: usize = normed.iter().map(|s| s.rows()).sum();
        for c in 0..FRAME_FEATURES {
            if stats.std[c] <= 1e-12 {
                continue;
            }
            let mean: f64 =
                normed.iter().flat_map(|s| s.column(c)).sum::<f64>() / total_rows as f64;
            let var: f64 =
                normed.iter().flat_map(|s| s.column(c)).map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / total_rows as f64;
            assert!(mean.abs() < 1e-9, "col {c} mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "col {c} var {var}");
        }
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(fit_normalizer(&[]).is_err());
    }

    #[test]
    fn translation_leaves_derived_columns_unchanged() {
        let path = vec![
            [0.0, 0.0, 0.0],
            [2.0, 1.0, -1.0],
            [3.0, 3.0, 0.5],
            [1.0, 4.0, 2.0],
        ];
        let shifted: Vec<Vec3> =
            path.iter().map(|p| [p[0] + 11.0, p[1] - 4.0, p[2] + 7.5]).collect();
        let a = extract_features(&sample_from_index_path(&path)).unwrap();
        let b = extract_features(&sample_from_index_path(&shifted)).unwrap();
        for r in 0..a.rows() {
            for c in RAW_FEATURES..FRAME_FEATURES {
                assert_relative_eq!(a.value(r, c), b.value(r, c), epsilon = 1e-9);
            }
        }
    }
}
