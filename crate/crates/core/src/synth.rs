//! Deterministic parametric gesture generator.
//!
//! Every sample is rendered from a per-user style: the gesture's catalog
//! shape (a control polyline plus hand-pose profiles) perturbed by
//! user-specific offsets whose magnitude grows with the configured
//! separation and with the shape's style richness (writing and signature
//! gestures carry more personal variation than a swipe, which is what makes
//! them more distinctive). Batches add a drift offset of magnitude
//! `drift_rate * batch`, samples add Gaussian jitter scaled by
//! `noise_sigma`, and shoulder-surfing attacks blend a victim's base path
//! with the attacker's own style at the configured mimic fidelity.
//!
//! All randomness flows from per-(purpose, user, gesture, batch, index)
//! streams derived by hashing, so generation is reproducible and
//! order-independent.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gesture::{
    FingerData, GestureFlags, GestureType, HandType, RawFrame, RawSample, Vec3, FINGER_COUNT,
};

/// Base per-control-point style deviation in millimeters.
const STYLE_SCALE: f64 = 3.0;
/// Attack rendering noise at fidelity 0, in millimeters.
const ATTACK_JITTER: f64 = 1.5;
/// Attacker tempo error at fidelity 0.
const ATTACK_TEMPO_SD: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    /// Mimic fidelity after seeing the gesture once.
    pub mimic_fidelity_one: f64,
    /// Mimic fidelity after unlimited observations.
    pub mimic_fidelity_multi: f64,
    /// Attack attempts per victim and attacker.
    pub attempts_per_victim: usize,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams { mimic_fidelity_one: 0.4, mimic_fidelity_multi: 0.7, attempts_per_victim: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub samples_per_user_per_batch: usize,
    pub n_batches: usize,
    /// Intra-user jitter as a fraction of the style separation.
    pub noise_sigma: f64,
    /// Per-batch style drift as a fraction of the style separation.
    pub drift_rate: f64,
    /// Inter-user style distance multiplier.
    pub separation: f64,
    pub fps: f64,
    pub gestures: Vec<GestureType>,
    /// Per-gesture duration overrides in seconds; the catalog supplies
    /// defaults calibrated so simple gestures stay short and writing
    /// gestures long.
    pub durations: BTreeMap<GestureType, f64>,
    pub attack: AttackParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 8,
            samples_per_user_per_batch: 6,
            n_batches: 1,
            noise_sigma: 0.2,
            drift_rate: 0.0,
            separation: 1.0,
            fps: 100.0,
            gestures: GestureType::ALL.to_vec(),
            durations: BTreeMap::new(),
            attack: AttackParams::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.samples_per_user_per_batch == 0 || self.n_batches == 0 {
            return Err(Error::Config("user, sample and batch counts must be positive".into()));
        }
        if self.noise_sigma < 0.0 || self.drift_rate < 0.0 || self.separation <= 0.0 {
            return Err(Error::Config(
                "noise_sigma and drift_rate must be non-negative, separation positive".into(),
            ));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Config("fps must be positive".into()));
        }
        if self.gestures.is_empty() {
            return Err(Error::Config("at least one gesture type required".into()));
        }
        let mut seen = self.gestures.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.gestures.len() {
            return Err(Error::Config("duplicate gesture types in config".into()));
        }
        for (g, d) in &self.durations {
            if !(d > &0.0) {
                return Err(Error::Config(format!("duration for {g} must be positive")));
            }
        }
        let a = &self.attack;
        if !(0.0..=1.0).contains(&a.mimic_fidelity_one)
            || !(0.0..=1.0).contains(&a.mimic_fidelity_multi)
        {
            return Err(Error::Config("mimic fidelities must lie in [0, 1]".into()));
        }
        if a.mimic_fidelity_multi <= a.mimic_fidelity_one {
            return Err(Error::Config(
                "multi-observation fidelity must exceed one-observation fidelity".into(),
            ));
        }
        if a.attempts_per_victim == 0 {
            return Err(Error::Config("attempts_per_victim must be positive".into()));
        }
        Ok(())
    }

    pub fn duration_for(&self, gesture: GestureType) -> f64 {
        self.durations.get(&gesture).copied().unwrap_or_else(|| shape_for(gesture).duration_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrengthProfile {
    /// Roughly constant at the given level.
    Level(f64),
    /// Ramps from open to closed over the gesture.
    RampUp,
}

/// Catalog entry: the canonical control polyline and pose profiles of one
/// gesture type.
#[derive(Debug, Clone)]
pub struct GestureShape {
    pub control_points: Vec<Vec3>,
    pub duration_s: f64,
    /// Multiplier on the per-user style deviation; higher for gestures that
    /// leave more room for personal variation.
    pub richness: f64,
    pub grab: StrengthProfile,
    pub pinch: StrengthProfile,
    /// Fingers gather toward the palm over the gesture (grab/zoom).
    pub collapse: bool,
}

/// Crown-shaped zigzag used for the writing-like gestures: `teeth` peaks
/// alternating between two heights produce `2 * teeth - 1` sharp interior
/// corners.
fn crown(x0: f64, x1: f64, y_low: f64, y_high: f64, teeth: usize, z: f64) -> Vec<Vec3> {
    let mut points = Vec::with_capacity(2 * teeth + 1);
    let step = (x1 - x0) / (2 * teeth) as f64;
    for k in 0..=2 * teeth {
        let x = x0 + step * k as f64;
        let y = if k % 2 == 0 { y_low } else { y_high };
        points.push([x, y, z]);
    }
    points
}

pub fn shape_for(gesture: GestureType) -> GestureShape {
    match gesture {
        GestureType::Swipe => GestureShape {
            control_points: vec![[-110.0, 220.0, 0.0], [110.0, 228.0, 6.0]],
            duration_s: 0.8,
            richness: 0.5,
            grab: StrengthProfile::Level(0.1),
            pinch: StrengthProfile::Level(0.1),
            collapse: false,
        },
        GestureType::Wave => {
            // two smooth elliptical sweeps
            let points = (0..=24)
                .map(|i| {
                    let a = i as f64 / 24.0 * 2.0 * std::f64::consts::TAU;
                    [90.0 * a.sin(), 225.0 + 26.0 * a.cos(), 8.0 * (a / 2.0).sin()]
                })
                .collect();
            GestureShape {
                control_points: points,
                duration_s: 1.4,
                richness: 0.65,
                grab: StrengthProfile::Level(0.1),
                pinch: StrengthProfile::Level(0.1),
                collapse: false,
            }
        }
        GestureType::Circle => {
            let points = (0..=30)
                .map(|i| {
                    let a = i as f64 / 30.0 * 1.2 * std::f64::consts::TAU;
                    [75.0 * a.cos(), 225.0 + 75.0 * a.sin(), 0.0]
                })
                .collect();
            GestureShape {
                control_points: points,
                duration_s: 1.5,
                richness: 0.85,
                grab: StrengthProfile::Level(0.15),
                pinch: StrengthProfile::Level(0.1),
                collapse: false,
            }
        }
        GestureType::Zoom => GestureShape {
            control_points: vec![
                [70.0, 272.0, 26.0],
                [42.0, 252.0, 16.0],
                [18.0, 234.0, 6.0],
                [8.0, 226.0, 2.0],
                [22.0, 238.0, 9.0],
            ],
            duration_s: 1.0,
            richness: 0.7,
            grab: StrengthProfile::Level(0.2),
            pinch: StrengthProfile::RampUp,
            collapse: true,
        },
        GestureType::Grab => GestureShape {
            control_points: vec![
                [36.0, 276.0, 12.0],
                [30.0, 262.0, 2.0],
                [22.0, 248.0, -10.0],
                [16.0, 238.0, -18.0],
            ],
            duration_s: 0.9,
            richness: 0.75,
            grab: StrengthProfile::RampUp,
            pinch: StrengthProfile::Level(0.2),
            collapse: true,
        },
        GestureType::Abc => {
            // three letter-like clusters: tent, spine-and-bump, zigzag tail
            let mut points = vec![
                [-108.0, 196.0, 0.0],
                [-88.0, 246.0, 0.0],
                [-66.0, 196.0, 0.0],
                [-76.0, 224.0, 0.0],
                [-98.0, 224.0, 0.0],
                [-48.0, 196.0, 2.0],
                [-48.0, 248.0, 2.0],
                [-22.0, 232.0, 2.0],
                [-46.0, 216.0, 2.0],
                [-16.0, 198.0, 2.0],
            ];
            points.extend(crown(6.0, 86.0, 200.0, 242.0, 3, 4.0));
            GestureShape {
                control_points: points,
                duration_s: 3.2,
                richness: 1.5,
                grab: StrengthProfile::Level(0.35),
                pinch: StrengthProfile::Level(0.55),
                collapse: false,
            }
        }
        GestureType::UserDefined => {
            // free-form: a tall crown, eleven sharp turns
            GestureShape {
                control_points: crown(-100.0, 100.0, 196.0, 252.0, 6, 0.0),
                duration_s: 2.9,
                richness: 1.7,
                grab: StrengthProfile::Level(0.3),
                pinch: StrengthProfile::Level(0.5),
                collapse: false,
            }
        }
        GestureType::Sig => {
            // signature: uneven strokes with a final underline flick
            let mut points = crown(-105.0, 35.0, 198.0, 244.0, 4, 0.0);
            points.extend([
                [58.0, 230.0, 2.0],
                [78.0, 198.0, 2.0],
                [96.0, 236.0, 2.0],
                [46.0, 208.0, 4.0],
                [104.0, 212.0, 4.0],
            ]);
            GestureShape {
                control_points: points,
                duration_s: 3.0,
                richness: 1.9,
                grab: StrengthProfile::Level(0.4),
                pinch: StrengthProfile::Level(0.6),
                collapse: false,
            }
        }
    }
}

/// Which attack scenario generated a mimic sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observations {
    One,
    Many,
}

impl Observations {
    pub fn label(&self) -> &'static str {
        match self {
            Observations::One => "one",
            Observations::Many => "many",
        }
    }
}

/// Per-user hand geometry and pose baseline.
#[derive(Debug, Clone)]
pub struct HandPose {
    pub hand_type: HandType,
    pub palm_width: f64,
    pub finger_lengths: [f64; FINGER_COUNT],
    pub finger_widths: [f64; FINGER_COUNT],
    pub splay: [Vec3; FINGER_COUNT],
    pub palm_offset: Vec3,
    pub base_angles: Vec3,
    pub angle_amp: Vec3,
    pub angle_phase: f64,
    pub strength_offset: f64,
}

/// A user's way of performing one gesture: perturbed control points, tempo
/// profile and hand pose, all a deterministic function of
/// (seed, user, gesture).
#[derive(Debug, Clone)]
pub struct UserStyle {
    pub user_id: String,
    pub gesture: GestureType,
    pub control_points: Vec<Vec3>,
    /// Progress-profile coefficient of `sin(2 pi t)`.
    pub tempo_w: f64,
    pub amplitude: f64,
    pub hand: HandPose,
    pub drift_direction: Vec<Vec3>,
}

/// Per-sample random magnitudes; every term is zero for a noiseless render.
#[derive(Debug, Clone, Copy)]
struct RenderNoise {
    jitter_sd: f64,
    tempo_sd: f64,
    phase_sd: f64,
    angle_sd: f64,
    strength_sd: f64,
}

impl RenderNoise {
    fn genuine(config: &SynthConfig) -> RenderNoise {
        let level = config.noise_sigma.min(1.5);
        RenderNoise {
            jitter_sd: config.noise_sigma * config.separation * STYLE_SCALE,
            tempo_sd: 0.1 * level,
            phase_sd: 0.6 * level,
            angle_sd: 0.02 * level,
            strength_sd: 0.02 * level,
        }
    }

    /// Attacker execution error, proportional to how much of the victim's
    /// style the attacker failed to absorb.
    fn attack(error: f64) -> RenderNoise {
        RenderNoise {
            jitter_sd: error * ATTACK_JITTER,
            tempo_sd: error * ATTACK_TEMPO_SD,
            phase_sd: error * 0.6,
            angle_sd: error * 0.02,
            strength_sd: error * 0.02,
        }
    }
}

fn derive_rng(seed: u64, parts: &[&str]) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for p in parts {
        hasher.update([0u8]);
        hasher.update(p.as_bytes());
    }
    ChaCha12Rng::from_seed(hasher.finalize().into())
}

fn normal(rng: &mut ChaCha12Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn centroid(points: &[Vec3]) -> Vec3 {
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    for v in &mut c {
        *v /= points.len() as f64;
    }
    c
}

const BASE_SPLAY: [Vec3; FINGER_COUNT] = [
    [-34.0, -16.0, 9.0],
    [0.0, 0.0, 0.0],
    [17.0, 2.0, -3.0],
    [33.0, -6.0, -5.0],
    [47.0, -15.0, -9.0],
];
const BASE_FINGER_LENGTHS: [f64; FINGER_COUNT] = [48.0, 58.0, 64.0, 60.0, 47.0];
const BASE_FINGER_WIDTHS: [f64; FINGER_COUNT] = [13.5, 12.0, 11.5, 11.0, 9.5];

/// Deterministic corpus generator bound to a config and seed.
#[derive(Debug, Clone)]
pub struct CorpusGenerator {
    config: SynthConfig,
    seed: u64,
}

impl CorpusGenerator {
    pub fn new(config: SynthConfig, seed: u64) -> Result<CorpusGenerator> {
        config.validate()?;
        Ok(CorpusGenerator { config, seed })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn user_ids(&self) -> Vec<String> {
        (1..=self.config.n_users).map(|u| format!("u{u:03}")).collect()
    }

    /// Config echo for the corpus file header.
    pub fn meta(&self) -> serde_json::Value {
        serde_json::json!({ "seed": self.seed, "config": self.config })
    }

    /// The style of any user id for a gesture, enrolled or not (attacker
    /// styles use ids outside the corpus).
    pub fn user_style(&self, user_id: &str, gesture: GestureType) -> UserStyle {
        let shape = shape_for(gesture);
        let mut rng = derive_rng(self.seed, &["style", user_id, gesture.name()]);
        let style_sd = self.config.separation * shape.richness * STYLE_SCALE;

        let hand_type =
            if rng.gen::<f64>() < 0.15 { HandType::Left } else { HandType::Right };
        let mirror = if hand_type == HandType::Left { -1.0 } else { 1.0 };
        let amplitude = 1.0 + 0.08 * normal(&mut rng) * self.config.separation.min(2.0);
        let amplitude = amplitude.clamp(0.6, 1.4);
        let tempo_w = (0.025 * normal(&mut rng)).clamp(-0.045, 0.045);

        let center = centroid(&shape.control_points);
        let mut control_points = Vec::with_capacity(shape.control_points.len());
        let mut drift_direction = Vec::with_capacity(shape.control_points.len());
        for p in &shape.control_points {
            let mut q = [0.0; 3];
            for k in 0..3 {
                let scaled = center[k] + (p[k] - center[k]) * amplitude;
                q[k] = scaled + style_sd * normal(&mut rng);
            }
            q[0] *= mirror;
            control_points.push(q);
            let d = [normal(&mut rng), normal(&mut rng), normal(&mut rng)];
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-9);
            drift_direction.push([d[0] / norm, d[1] / norm, d[2] / norm]);
        }

        let hand_scale = (1.0 + 0.07 * normal(&mut rng)).clamp(0.8, 1.2);
        let mut finger_lengths = [0.0; FINGER_COUNT];
        let mut finger_widths = [0.0; FINGER_COUNT];
        let mut splay = [[0.0; 3]; FINGER_COUNT];
        for f in 0..FINGER_COUNT {
            finger_lengths[f] = BASE_FINGER_LENGTHS[f] * hand_scale + 1.2 * normal(&mut rng);
            finger_widths[f] =
                (BASE_FINGER_WIDTHS[f] * hand_scale + 0.4 * normal(&mut rng)).max(6.0);
            for k in 0..3 {
                splay[f][k] = BASE_SPLAY[f][k] * hand_scale + 0.8 * normal(&mut rng);
            }
            splay[f][0] *= mirror;
        }
        let palm_offset = [
            mirror * (-6.0 + 2.0 * normal(&mut rng)),
            -52.0 + 3.0 * normal(&mut rng),
            14.0 + 2.0 * normal(&mut rng),
        ];
        let base_angles = [
            0.35 + 0.12 * normal(&mut rng),
            mirror * (0.1 + 0.1 * normal(&mut rng)),
            mirror * (-0.15 + 0.12 * normal(&mut rng)),
        ];
        let angle_amp = [
            0.06 + 0.02 * normal(&mut rng).abs(),
            0.05 + 0.02 * normal(&mut rng).abs(),
            0.07 + 0.02 * normal(&mut rng).abs(),
        ];
        let angle_phase = rng.gen::<f64>() * std::f64::consts::TAU;
        let strength_offset = 0.06 * normal(&mut rng);
        let palm_width = (85.0 * hand_scale + 2.0 * normal(&mut rng)).clamp(55.0, 115.0);

        UserStyle {
            user_id: user_id.to_string(),
            gesture,
            control_points,
            tempo_w,
            amplitude,
            hand: HandPose {
                hand_type,
                palm_width,
                finger_lengths,
                finger_widths,
                splay,
                palm_offset,
                base_angles,
                angle_amp,
                angle_phase,
                strength_offset,
            },
            drift_direction,
        }
    }

    /// Renders every sample of the configured corpus, ordered by user,
    /// gesture, batch, sample index.
    pub fn generate(&self) -> Result<Vec<RawSample>> {
        let noise = RenderNoise::genuine(&self.config);
        let mut samples = Vec::new();
        for user in self.user_ids() {
            for &gesture in &self.config.gestures {
                let style = self.user_style(&user, gesture);
                for batch in 1..=self.config.n_batches as u32 {
                    for idx in 0..self.config.samples_per_user_per_batch {
                        let sample_id = format!("{user}-{gesture}-b{batch:02}-s{idx:03}");
                        let mut rng = derive_rng(
                            self.seed,
                            &["sample", &user, gesture.name(), &batch.to_string(), &idx.to_string()],
                        );
                        let frames = self.render(&style, batch, &noise, &mut rng);
                        let sample = RawSample {
                            sample_id,
                            user_id: user.clone(),
                            gesture,
                            batch,
                            frames,
                        };
                        debug_assert!(sample.validate().is_ok());
                        samples.push(sample);
                    }
                }
            }
        }
        Ok(samples)
    }

    /// Renders a shoulder-surfing mimic of `victim_sample` by `attacker_id`:
    /// a convex blend of the victim's base style (weight = fidelity) and the
    /// attacker's own style, with tempo error and jitter scaled by
    /// `1 - fidelity`. The error draws are shared between the two
    /// observation levels of the same attempt, so more observation strictly
    /// sharpens the same attack.
    pub fn generate_attack(
        &self,
        victim_sample: &RawSample,
        attacker_id: &str,
        observations: Observations,
        attempt: usize,
    ) -> Result<RawSample> {
        let gesture = victim_sample.gesture;
        let victim = self.user_style(&victim_sample.user_id, gesture);
        let attacker = self.user_style(attacker_id, gesture);
        let fidelity = match observations {
            Observations::One => self.config.attack.mimic_fidelity_one,
            Observations::Many => self.config.attack.mimic_fidelity_multi,
        };
        let blended = blend_styles(&victim, &attacker, fidelity);
        let mut rng = derive_rng(
            self.seed,
            &["attack", &victim_sample.user_id, gesture.name(), attacker_id, &attempt.to_string()],
        );
        let noise = RenderNoise::attack(1.0 - fidelity);
        let frames = self.render(&blended, 1, &noise, &mut rng);
        Ok(RawSample {
            sample_id: format!(
                "atk-{attacker_id}-on-{}-{gesture}-{}-a{attempt:02}",
                victim_sample.user_id,
                observations.label()
            ),
            user_id: attacker_id.to_string(),
            gesture,
            batch: 1,
            frames,
        })
    }

    fn render(
        &self,
        style: &UserStyle,
        batch: u32,
        noise: &RenderNoise,
        rng: &mut ChaCha12Rng,
    ) -> Vec<RawFrame> {
        let cfg = &self.config;
        let gesture = style.gesture;
        let shape = shape_for(gesture);
        let duration = cfg.duration_for(gesture);
        let n = (cfg.fps * duration).round().max(5.0) as usize;
        let drift_mag = cfg.drift_rate * batch as f64 * cfg.separation * STYLE_SCALE;

        // per-sample path: style control points + batch drift + jitter
        let mut points = Vec::with_capacity(style.control_points.len());
        for (p, d) in style.control_points.iter().zip(&style.drift_direction) {
            let mut q = [0.0; 3];
            for k in 0..3 {
                q[k] = p[k] + drift_mag * d[k] + noise.jitter_sd * normal(rng);
            }
            points.push(q);
        }

        let tempo_v = (noise.tempo_sd * normal(rng)).clamp(-0.09, 0.09);
        let phase = style.hand.angle_phase + noise.phase_sd * normal(rng);
        let angle_noise = noise.angle_sd;
        let strength_noise = noise.strength_sd;

        // arc-length table of the path
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for w in points.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2)
                + (w[1][1] - w[0][1]).powi(2)
                + (w[1][2] - w[0][2]).powi(2))
            .sqrt();
            cumulative.push(cumulative.last().unwrap() + d);
        }
        let total = *cumulative.last().unwrap();

        let position_at = |frac: f64| -> Vec3 {
            if total <= 1e-9 || points.len() < 2 {
                return points[0];
            }
            let target = frac.clamp(0.0, 1.0) * total;
            let mut seg = 0usize;
            while seg + 1 < cumulative.len() - 1 && cumulative[seg + 1] < target {
                seg += 1;
            }
            let span = cumulative[seg + 1] - cumulative[seg];
            let t =
                if span > 0.0 { ((target - cumulative[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
            [
                points[seg][0] + t * (points[seg + 1][0] - points[seg][0]),
                points[seg][1] + t * (points[seg + 1][1] - points[seg][1]),
                points[seg][2] + t * (points[seg + 1][2] - points[seg][2]),
            ]
        };

        let hand = &style.hand;
        let mut tips: Vec<[Vec3; FINGER_COUNT]> = Vec::with_capacity(n);
        let mut index_tips = Vec::with_capacity(n);
        for k in 0..n {
            let t_hat = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            let progress = (t_hat
                + style.tempo_w * (std::f64::consts::TAU * t_hat).sin()
                + tempo_v * (std::f64::consts::PI * t_hat).sin())
            .clamp(0.0, 1.0);
            let index_tip = position_at(progress);
            let collapse = if shape.collapse { 1.0 - 0.65 * smoothstep(t_hat) } else { 1.0 };
            let mut frame_tips = [[0.0; 3]; FINGER_COUNT];
            for f in 0..FINGER_COUNT {
                for c in 0..3 {
                    frame_tips[f][c] = index_tip[c] + hand.splay[f][c] * collapse;
                }
            }
            tips.push(frame_tips);
            index_tips.push(index_tip);
        }

        let fps = cfg.fps;
        let mut frames = Vec::with_capacity(n);
        for k in 0..n {
            let t_hat = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            let index_tip = index_tips[k];
            let prev = if k == 0 { 1 } else { k };
            let mut fingers = Vec::with_capacity(FINGER_COUNT);
            for f in 0..FINGER_COUNT {
                let velocity = [
                    (tips[prev][f][0] - tips[prev - 1][f][0]) * fps,
                    (tips[prev][f][1] - tips[prev - 1][f][1]) * fps,
                    (tips[prev][f][2] - tips[prev - 1][f][2]) * fps,
                ];
                let speed = (velocity[0] * velocity[0]
                    + velocity[1] * velocity[1]
                    + velocity[2] * velocity[2])
                    .sqrt();
                let direction = if speed > 1e-9 {
                    [velocity[0] / speed, velocity[1] / speed, velocity[2] / speed]
                } else {
                    [0.0; 3]
                };
                fingers.push(FingerData {
                    tip_pos: tips[k][f],
                    tip_velocity: velocity,
                    tip_direction: direction,
                    finger_length: hand.finger_lengths[f],
                    finger_width: hand.finger_widths[f],
                });
            }
            let fingers: [FingerData; FINGER_COUNT] = fingers.try_into().expect("five fingers");

            let wobble = (std::f64::consts::TAU * t_hat + phase).sin();
            let grab = strength_value(&shape.grab, t_hat, hand.strength_offset)
                + strength_noise * normal(rng);
            let pinch = strength_value(&shape.pinch, t_hat, hand.strength_offset)
                + strength_noise * normal(rng);

            let palm_pos = [
                index_tip[0] + hand.palm_offset[0],
                index_tip[1] + hand.palm_offset[1],
                index_tip[2] + hand.palm_offset[2],
            ];
            let wrist_pos = [palm_pos[0], palm_pos[1] - 55.0, palm_pos[2] + 6.0];
            let arm_pos = [palm_pos[0], palm_pos[1] - 115.0, palm_pos[2] + 18.0];

            frames.push(RawFrame {
                grab_strength: grab.clamp(0.0, 1.0),
                pinch_strength: pinch.clamp(0.0, 1.0),
                pitch: hand.base_angles[0] + hand.angle_amp[0] * wobble + angle_noise * normal(rng),
                yaw: hand.base_angles[1] + hand.angle_amp[1] * wobble + angle_noise * normal(rng),
                roll: hand.base_angles[2] + hand.angle_amp[2] * wobble + angle_noise * normal(rng),
                palm_width: hand.palm_width,
                palm_pos,
                arm_pos,
                wrist_pos,
                hand_type: hand.hand_type,
                gesture_flags: GestureFlags {
                    circle: gesture == GestureType::Circle,
                    swipe: gesture == GestureType::Swipe,
                    key_tap: false,
                    screen_tap: false,
                },
                fingers,
            });
        }
        frames
    }
}

fn strength_value(profile: &StrengthProfile, t_hat: f64, offset: f64) -> f64 {
    match profile {
        StrengthProfile::Level(base) => base + offset,
        StrengthProfile::RampUp => 0.12 + 0.78 * smoothstep(t_hat) + offset,
    }
}

/// Convex blend of two styles of the same gesture; `fidelity` weights the
/// victim. Handedness snaps to whichever side dominates.
fn blend_styles(victim: &UserStyle, attacker: &UserStyle, fidelity: f64) -> UserStyle {
    let f = fidelity.clamp(0.0, 1.0);
    let g = 1.0 - f;
    let lerp = |a: f64, b: f64| f * a + g * b;
    let lerp3 = |a: &Vec3, b: &Vec3| [lerp(a[0], b[0]), lerp(a[1], b[1]), lerp(a[2], b[2])];
    let control_points = victim
        .control_points
        .iter()
        .zip(&attacker.control_points)
        .map(|(a, b)| lerp3(a, b))
        .collect();
    let mut finger_lengths = [0.0; FINGER_COUNT];
    let mut finger_widths = [0.0; FINGER_COUNT];
    let mut splay = [[0.0; 3]; FINGER_COUNT];
    for i in 0..FINGER_COUNT {
        finger_lengths[i] = lerp(victim.hand.finger_lengths[i], attacker.hand.finger_lengths[i]);
        finger_widths[i] = lerp(victim.hand.finger_widths[i], attacker.hand.finger_widths[i]);
        splay[i] = lerp3(&victim.hand.splay[i], &attacker.hand.splay[i]);
    }
    UserStyle {
        user_id: attacker.user_id.clone(),
        gesture: victim.gesture,
        control_points,
        tempo_w: lerp(victim.tempo_w, attacker.tempo_w),
        amplitude: lerp(victim.amplitude, attacker.amplitude),
        hand: HandPose {
            hand_type: if f >= 0.5 { victim.hand.hand_type } else { attacker.hand.hand_type },
            palm_width: lerp(victim.hand.palm_width, attacker.hand.palm_width),
            finger_lengths,
            finger_widths,
            splay,
            palm_offset: lerp3(&victim.hand.palm_offset, &attacker.hand.palm_offset),
            base_angles: lerp3(&victim.hand.base_angles, &attacker.hand.base_angles),
            angle_amp: lerp3(&victim.hand.angle_amp, &attacker.hand.angle_amp),
            angle_phase: lerp(victim.hand.angle_phase, attacker.hand.angle_phase),
            strength_offset: lerp(victim.hand.strength_offset, attacker.hand.strength_offset),
        },
        drift_direction: victim
            .drift_direction
            .iter()
            .zip(&attacker.drift_direction)
            .map(|(a, b)| lerp3(a, b))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SynthConfig {
        SynthConfig {
            n_users: 2,
            samples_per_user_per_batch: 2,
            n_batches: 2,
            gestures: vec![GestureType::Swipe, GestureType::Sig],
            durations: BTreeMap::from([(GestureType::Swipe, 0.1), (GestureType::Sig, 0.2)]),
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = CorpusGenerator::new(tiny_config(), 42).unwrap().generate().unwrap();
        let b = CorpusGenerator::new(tiny_config(), 42).unwrap().generate().unwrap();
        assert_eq!(a, b);
        let c = CorpusGenerator::new(tiny_config(), 43).unwrap().generate().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn samples_satisfy_model_invariants() {
        let samples = CorpusGenerator::new(tiny_config(), 7).unwrap().generate().unwrap();
        assert_eq!(samples.len(), 2 * 2 * 2 * 2);
        for s in &samples {
            s.validate().unwrap();
        }
    }

    #[test]
    fn zero_noise_zero_drift_makes_identical_samples() {
        let config = SynthConfig {
            noise_sigma: 0.0,
            drift_rate: 0.0,
            n_batches: 2,
            ..tiny_config()
        };
        let samples = CorpusGenerator::new(config, 11).unwrap().generate().unwrap();
        let of_user: Vec<&RawSample> = samples
            .iter()
            .filter(|s| s.user_id == "u001" && s.gesture == GestureType::Sig)
            .collect();
        assert!(of_user.len() >= 4);
        for s in &of_user[1..] {
            assert_eq!(s.frames, of_user[0].frames);
        }
    }

    #[test]
    fn frame_count_tracks_duration() {
        let mut config = tiny_config();
        config.durations.insert(GestureType::Sig, 2.84);
        let samples = CorpusGenerator::new(config, 3).unwrap().generate().unwrap();
        for s in samples.iter().filter(|s| s.gesture == GestureType::Sig) {
            let n = s.frame_count() as f64;
            assert!((n - 284.0).abs() <= 1.0, "frames {n}");
        }
    }

    #[test]
    fn catalog_durations_span_the_bands() {
        for g in GestureType::ALL {
            let d = shape_for(g).duration_s;
            let frames = (100.0 * d).round();
            if g.is_complex() {
                assert!(frames >= 271.0, "{g} has {frames} frames");
            } else {
                assert!(frames <= 160.0, "{g} has {frames} frames");
            }
        }
    }

    #[test]
    fn full_fidelity_attack_replays_the_noiseless_victim() {
        let mut config = tiny_config();
        config.attack.mimic_fidelity_multi = 1.0;
        config.attack.mimic_fidelity_one = 0.4;
        config.noise_sigma = 0.0;
        config.drift_rate = 0.0;
        let gen = CorpusGenerator::new(config, 5).unwrap();
        let samples = gen.generate().unwrap();
        // with noise and drift off, every genuine sample IS the noiseless base
        let victim = samples
            .iter()
            .find(|s| s.user_id == "u001" && s.gesture == GestureType::Sig && s.batch == 1)
            .unwrap();
        let attack = gen.generate_attack(victim, "attacker9", Observations::Many, 0).unwrap();
        assert_eq!(attack.frames, victim.frames);
    }

    #[test]
    fn zero_fidelity_blend_is_the_attackers_own_style() {
        let gen = CorpusGenerator::new(tiny_config(), 5).unwrap();
        let victim_style = gen.user_style("u001", GestureType::Sig);
        let attacker_style = gen.user_style("attacker1", GestureType::Sig);
        let blended = blend_styles(&victim_style, &attacker_style, 0.0);
        for (a, b) in blended.control_points.iter().zip(&attacker_style.control_points) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12);
            }
        }
        assert_eq!(blended.hand.hand_type, attacker_style.hand.hand_type);
    }

    #[test]
    fn multi_observation_lands_closer_to_the_victim() {
        let gen = CorpusGenerator::new(tiny_config(), 5).unwrap();
        let samples = gen.generate().unwrap();
        let victim = samples
            .iter()
            .find(|s| s.user_id == "u002" && s.gesture == GestureType::Sig && s.batch == 1)
            .unwrap();
        let mut closer = 0usize;
        let trials = 20;
        for attempt in 0..trials {
            let one = gen
                .generate_attack(victim, "attacker1", Observations::One, attempt)
                .unwrap();
            let many = gen
                .generate_attack(victim, "attacker1", Observations::Many, attempt)
                .unwrap();
            let dist = |s: &RawSample| -> f64 {
                // mean index-tip deviation from the observed victim sample
                s.frames
                    .iter()
                    .zip(&victim.frames)
                    .map(|(a, v)| {
                        let pa = a.fingers[1].tip_pos;
                        let pv = v.fingers[1].tip_pos;
                        ((pa[0] - pv[0]).powi(2) + (pa[1] - pv[1]).powi(2) + (pa[2] - pv[2]).powi(2))
                            .sqrt()
                    })
                    .sum::<f64>()
                    / s.frames.len() as f64
            };
            if dist(&many) < dist(&one) {
                closer += 1;
            }
        }
        assert!(closer >= trials * 9 / 10, "multi closer in only {closer}/{trials} attempts");
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut config = tiny_config();
        config.attack.mimic_fidelity_multi = 0.2;
        assert!(CorpusGenerator::new(config, 1).is_err());
        let mut config = tiny_config();
        config.n_users = 0;
        assert!(CorpusGenerator::new(config, 1).is_err());
        let mut config = tiny_config();
        config.gestures = vec![GestureType::Swipe, GestureType::Swipe];
        assert!(CorpusGenerator::new(config, 1).is_err());
    }

    #[test]
    fn config_round_trips_as_json() {
        let config = tiny_config();
        let json = serde_json::to_string(&config).unwrap();
        let back: SynthConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
        // defaults fill missing fields
        let partial: SynthConfig = serde_json::from_str(r#"{"n_users": 3}"#).unwrap();
        assert_eq!(partial.n_users, 3);
        assert_eq!(partial.fps, 100.0);
    }
}
