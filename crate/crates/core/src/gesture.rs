//! Raw gesture data model: hand-tracker frames and labeled gesture samples.
//!
//! A sample is one complete gesture: an ordered run of frames, each holding
//! the tracked hand state (20 hand scalars) and five fingers (11 scalars
//! each). Positions are millimeters, angles radians, velocities mm/s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 3D point/vector in millimeters, serialized as a `[x, y, z]` array.
pub type Vec3 = [f64; 3];

pub const FINGER_COUNT: usize = 5;
pub const HAND_FEATURES: usize = 20;
pub const FINGER_FEATURES: usize = 11;
/// 20 hand + 5 x 11 finger scalars.
pub const RAW_FEATURES: usize = HAND_FEATURES + FINGER_COUNT * FINGER_FEATURES;
/// Index of the index finger in the fixed thumb..pinky order.
pub const INDEX_FINGER: usize = 1;

pub const FINGER_NAMES: [&str; FINGER_COUNT] = ["thumb", "index", "middle", "ring", "pinky"];

const DIRECTION_NORM_TOL: f64 = 1e-6;

/// The eight gesture types handled by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureType {
    Swipe,
    Wave,
    Circle,
    Zoom,
    Grab,
    Abc,
    UserDefined,
    Sig,
}

impl GestureType {
    pub const ALL: [GestureType; 8] = [
        GestureType::Swipe,
        GestureType::Wave,
        GestureType::Circle,
        GestureType::Zoom,
        GestureType::Grab,
        GestureType::Abc,
        GestureType::UserDefined,
        GestureType::Sig,
    ];

    /// Stable lowercase name, identical to the serialized form.
    pub fn name(&self) -> &'static str {
        match self {
            GestureType::Swipe => "swipe",
            GestureType::Wave => "wave",
            GestureType::Circle => "circle",
            GestureType::Zoom => "zoom",
            GestureType::Grab => "grab",
            GestureType::Abc => "abc",
            GestureType::UserDefined => "user_defined",
            GestureType::Sig => "sig",
        }
    }

    pub fn from_name(name: &str) -> Result<GestureType> {
        GestureType::ALL
            .iter()
            .copied()
            .find(|g| g.name() == name)
            .ok_or_else(|| Error::data(format!("unknown gesture label {name:?}")))
    }

    /// Multi-stroke writing/signature gestures, as opposed to the simple
    /// one-motion ones.
    pub fn is_complex(&self) -> bool {
        matches!(self, GestureType::Abc | GestureType::UserDefined | GestureType::Sig)
    }
}

impl std::fmt::Display for GestureType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandType {
    Left,
    Right,
}

impl HandType {
    /// 0/1 encoding used in the feature matrix.
    pub fn as_feature(&self) -> f64 {
        match self {
            HandType::Left => 0.0,
            HandType::Right => 1.0,
        }
    }
}

/// Tracker-reported gesture classification flags for one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureFlags {
    pub circle: bool,
    pub swipe: bool,
    pub key_tap: bool,
    pub screen_tap: bool,
}

impl GestureFlags {
    pub fn as_features(&self) -> [f64; 4] {
        [
            self.circle as u8 as f64,
            self.swipe as u8 as f64,
            self.key_tap as u8 as f64,
            self.screen_tap as u8 as f64,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerData {
    pub tip_pos: Vec3,
    pub tip_velocity: Vec3,
    /// Unit vector when moving, all-zero when stationary.
    pub tip_direction: Vec3,
    pub finger_length: f64,
    pub finger_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFrame {
    pub grab_strength: f64,
    pub pinch_strength: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
    pub palm_width: f64,
    pub palm_pos: Vec3,
    pub arm_pos: Vec3,
    pub wrist_pos: Vec3,
    pub hand_type: HandType,
    pub gesture_flags: GestureFlags,
    pub fingers: [FingerData; FINGER_COUNT],
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::data(format!("non-finite value in {what}")))
    }
}

fn check_finite3(v: &Vec3, what: &str) -> Result<()> {
    for x in v {
        check_finite(*x, what)?;
    }
    Ok(())
}

impl RawFrame {
    pub fn validate(&self) -> Result<()> {
        for (v, what) in [
            (self.grab_strength, "grab_strength"),
            (self.pinch_strength, "pinch_strength"),
            (self.pitch, "pitch"),
            (self.yaw, "yaw"),
            (self.roll, "roll"),
            (self.palm_width, "palm_width"),
        ] {
            check_finite(v, what)?;
        }
        if !(0.0..=1.0).contains(&self.grab_strength) {
            return Err(Error::data("grab_strength outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.pinch_strength) {
            return Err(Error::data("pinch_strength outside [0, 1]"));
        }
        check_finite3(&self.palm_pos, "palm_pos")?;
        check_finite3(&self.arm_pos, "arm_pos")?;
        check_finite3(&self.wrist_pos, "wrist_pos")?;
        for (i, finger) in self.fingers.iter().enumerate() {
            let name = FINGER_NAMES[i];
            check_finite3(&finger.tip_pos, name)?;
            check_finite3(&finger.tip_velocity, name)?;
            check_finite3(&finger.tip_direction, name)?;
            check_finite(finger.finger_length, name)?;
            check_finite(finger.finger_width, name)?;
            let d = finger.tip_direction;
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if norm > 0.0 && (norm - 1.0).abs() > DIRECTION_NORM_TOL {
                return Err(Error::data(format!(
                    "{name} tip_direction has norm {norm}, expected 1 or 0"
                )));
            }
        }
        Ok(())
    }
}

/// One measurement of a complete gesture: `N` temporally ordered frames,
/// labeled with the performing user, the gesture type, and the 1-based
/// collection batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub sample_id: String,
    pub user_id: String,
    pub gesture: GestureType,
    pub batch: u32,
    pub frames: Vec<RawFrame>,
}

impl RawSample {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::data(format!(
                "sample {} has {} frames, need at least 2",
                self.sample_id,
                self.frames.len()
            )));
        }
        if self.batch < 1 {
            return Err(Error::data(format!("sample {} has batch 0, batches are 1-based", self.sample_id)));
        }
        for frame in &self.frames {
            frame.validate().map_err(|e| Error::data(format!("sample {}: {e}", self.sample_id)))?;
        }
        Ok(())
    }

    /// Index-finger tip positions, the trajectory used for corner detection.
    pub fn index_tip_trajectory(&self) -> Vec<Vec3> {
        self.frames.iter().map(|f| f.fingers[INDEX_FINGER].tip_pos).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn zero_finger() -> FingerData {
        FingerData {
            tip_pos: [0.0; 3],
            tip_velocity: [0.0; 3],
            tip_direction: [0.0; 3],
            finger_length: 50.0,
            finger_width: 10.0,
        }
    }

    pub(crate) fn test_frame() -> RawFrame {
        RawFrame {
            grab_strength: 0.1,
            pinch_strength: 0.2,
            pitch: 0.0,
            yaw: 0.0,
            roll: 0.0,
            palm_width: 85.0,
            palm_pos: [0.0, 200.0, 0.0],
            arm_pos: [0.0, 100.0, 10.0],
            wrist_pos: [0.0, 150.0, 5.0],
            hand_type: HandType::Right,
            gesture_flags: GestureFlags::default(),
            fingers: [zero_finger(), zero_finger(), zero_finger(), zero_finger(), zero_finger()],
        }
    }

    #[test]
    fn gesture_names_round_trip() {
        assert_eq!(GestureType::ALL.len(), 8);
        for g in GestureType::ALL {
            let name = g.name();
            assert!(name.chars().all(|c| c.is_ascii_lowercase() || c == '_'));
            assert_eq!(GestureType::from_name(name).unwrap(), g);
            let json = serde_json::to_string(&g).unwrap();
            assert_eq!(json, format!("\"{name}\""));
            let back: GestureType = serde_json::from_str(&json).unwrap();
            assert_eq!(back, g);
        }
    }

    #[test]
    fn unknown_gesture_label_rejected() {
        assert!(GestureType::from_name("pinch").is_err());
        assert!(serde_json::from_str::<GestureType>("\"pinch\"").is_err());
    }

    #[test]
    fn raw_feature_counts() {
        assert_eq!(HAND_FEATURES, 20);
        assert_eq!(FINGER_FEATURES, 11);
        assert_eq!(RAW_FEATURES, 75);
    }

    #[test]
    fn sample_needs_two_frames() {
        let sample = RawSample {
            sample_id: "s0".into(),
            user_id: "u0".into(),
            gesture: GestureType::Swipe,
            batch: 1,
            frames: vec![test_frame()],
        };
        assert!(sample.validate().is_err());
    }

    #[test]
    fn direction_norm_checked() {
        let mut frame = test_frame();
        frame.fingers[0].tip_direction = [0.5, 0.5, 0.0];
        assert!(frame.validate().is_err());
        frame.fingers[0].tip_direction = [1.0, 0.0, 0.0];
        assert!(frame.validate().is_ok());
        frame.fingers[0].tip_direction = [0.0, 0.0, 0.0];
        assert!(frame.validate().is_ok());
    }

    #[test]
    fn batch_is_one_based() {
        let sample = RawSample {
            sample_id: "s0".into(),
            user_id: "u0".into(),
            gesture: GestureType::Swipe,
            batch: 0,
            frames: vec![test_frame(), test_frame()],
        };
        assert!(sample.validate().is_err());
    }
}
