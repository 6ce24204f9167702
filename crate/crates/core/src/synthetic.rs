//! Synthetic sign videos: class-specific finger motion rendered at random
//! global poses, plus per-class expression tracks.
//!
//! Each class owns a hand shape (which fingers are curled) and a small
//! finger oscillation with its own phase pattern. A video samples that motion
//! over normalized time `t ∈ [0, 1]`, places the hand with a random rotation,
//! translation and scale, and adds isotropic landmark noise.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expression::{
    synthetic_provider, write_expression_file, Expression, ExpressionProvider, ExpressionTrack,
    VideoRef,
};
use crate::format::FormatError;
use crate::geometry::{axis_angle, gaussian, Mat3, Quaternion, Vec3};
use crate::landmark::{HandLandmarks, Handedness, LandmarkSequence, NUM_JOINTS};
use crate::landmark_io::{write_landmark_file, LandmarkFormat};
use crate::split::{Manifest, SplitError};

pub const LANDMARKS_FILE: &str = "landmarks.jsonl";
pub const EXPRESSIONS_FILE: &str = "expressions.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Manifest(#[from] SplitError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub videos_per_class: usize,
    /// Inclusive range of raw video lengths.
    pub frames_per_video: [usize; 2],
    /// Largest rotation angle; 180 or more draws uniformly from SO(3).
    pub rotation_max_deg: f64,
    /// Per-axis translation range.
    pub translation_range: [f64; 2],
    pub scale_range: [f64; 2],
    /// Landmark noise standard deviation, in units of the unscaled hand
    /// (wrist to index hinge is about 1).
    pub noise_sigma: f64,
    /// Amplitude of the per-class finger oscillation, as a curl fraction.
    pub motion_amplitude: f64,
    /// Classes `0..expression_classes` carry an expression; the rest get the
    /// uniform vector.
    pub expression_classes: usize,
    pub expression_noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 10,
            videos_per_class: 40,
            frames_per_video: [70, 130],
            rotation_max_deg: 180.0,
            translation_range: [-10.0, 10.0],
            scale_range: [0.1, 10.0],
            noise_sigma: 0.01,
            motion_amplitude: 0.15,
            expression_classes: 6,
            expression_noise: 0.3,
        }
    }
}

impl SyntheticSpec {
    /// No pose nuisance and no noise.
    pub fn without_nuisance(mut self) -> Self {
        self.rotation_max_deg = 0.0;
        self.translation_range = [0.0, 0.0];
        self.scale_range = [1.0, 1.0];
        self.noise_sigma = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::InvalidSpec(m.to_string()));
        if self.n_classes < 2 {
            return bad("n_classes must be at least 2");
        }
        if self.n_classes > SHAPES.len() {
            return bad("at most 32 classes are supported");
        }
        if self.videos_per_class == 0 {
            return bad("videos_per_class must be positive");
        }
        let [f0, f1] = self.frames_per_video;
        if f0 == 0 || f0 > f1 {
            return bad("frames_per_video must be a non-empty, ordered range");
        }
        let [t0, t1] = self.translation_range;
        let [s0, s1] = self.scale_range;
        if !(t0 <= t1) || !(s0 <= s1) || !(s0 > 0.0) {
            return bad("translation and scale ranges must be ordered, scale positive");
        }
        if !(self.rotation_max_deg >= 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("rotation and noise must be non-negative");
        }
        if !(0.0..=0.5).contains(&self.motion_amplitude) {
            return bad("motion_amplitude must lie in [0, 0.5]");
        }
        if self.expression_classes > EXPRESSION_CYCLE.len() {
            return bad("at most 6 expression classes are supported");
        }
        if !(0.0..=1.0).contains(&self.expression_noise) {
            return bad("expression_noise must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn class_name(k: usize) -> String {
        format!("sign_{k:02}")
    }

    /// Expression attached to each class.
    pub fn expression_map(&self) -> Vec<Option<Expression>> {
        (0..self.n_classes)
            .map(|k| (k < self.expression_classes).then(|| EXPRESSION_CYCLE[k]))
            .collect()
    }
}

/// Expressions assigned to expression-bearing classes, in class order.
const EXPRESSION_CYCLE: [Expression; 6] = [
    Expression::Angry,
    Expression::Disgusted,
    Expression::Fear,
    Expression::Happy,
    Expression::Sad,
    Expression::Surprised,
];

/// Curl pattern per class, `[thumb, index, middle, ring, pinky]`, 1 = curled.
/// The first ten are the default classes; the remainder extend the set.
const SHAPES: [[u8; 5]; 32] = [
    [0, 0, 0, 0, 0],
    [1, 1, 1, 1, 1],
    [1, 0, 1, 1, 1],
    [1, 0, 0, 1, 1],
    [0, 1, 1, 1, 0],
    [1, 0, 0, 0, 0],
    [0, 1, 1, 1, 1],
    [1, 1, 0, 0, 0],
    [0, 0, 1, 1, 1],
    [1, 1, 1, 1, 0],
    [1, 0, 0, 0, 1],
    [0, 0, 0, 1, 1],
    [1, 1, 0, 1, 1],
    [0, 1, 0, 1, 0],
    [1, 0, 1, 0, 1],
    [0, 0, 1, 1, 0],
    [1, 1, 1, 0, 0],
    [0, 1, 0, 0, 1],
    [1, 0, 1, 0, 0],
    [0, 0, 0, 0, 1],
    [1, 1, 0, 0, 1],
    [0, 1, 1, 0, 0],
    [1, 0, 0, 1, 0],
    [0, 0, 1, 0, 1],
    [1, 1, 1, 0, 1],
    [0, 1, 0, 1, 1],
    [1, 0, 1, 1, 0],
    [0, 0, 1, 0, 0],
    [1, 1, 0, 1, 0],
    [0, 1, 1, 0, 1],
    [0, 1, 0, 0, 0],
    [0, 0, 0, 1, 0],
];

const CURLED: f64 = 0.85;
const EXTENDED: f64 = 0.1;

/// Palm hinge positions of an unscaled right hand. Fingers extend along +y,
/// the palm normal is +z.
const HINGES: [[f64; 3]; 5] = [
    [0.22, 0.22, 0.05],  // thumb CMC (joint 1)
    [0.30, 1.00, 0.0],   // index MCP (5)
    [0.06, 1.05, 0.0],   // middle MCP (9)
    [-0.16, 0.98, 0.0],  // ring MCP (13)
    [-0.34, 0.86, 0.0],  // pinky MCP (17)
];

const SEGMENTS: [[f64; 3]; 5] = [
    [0.32, 0.28, 0.24],
    [0.42, 0.26, 0.21],
    [0.46, 0.29, 0.23],
    [0.43, 0.27, 0.21],
    [0.34, 0.21, 0.19],
];

/// Hand-local landmarks for the given per-finger curl fractions.
pub fn pose_hand(curls: [f64; 5]) -> [Vec3<f64>; NUM_JOINTS] {
    let mut pts = [Vec3::zero(); NUM_JOINTS];
    for (f, &curl) in curls.iter().enumerate() {
        let base = Vec3::from_array(HINGES[f]);
        let first = if f == 0 { 1 } else { 1 + 4 * f };
        pts[first] = base;
        let (dir0, axis) = if f == 0 {
            // Thumb points up and out and folds across the palm.
            let d = Vec3::new(0.75, 0.6, 0.25);
            let d = d.scale(1.0 / d.norm());
            let a = Vec3::new(-0.3, 0.4, 1.0);
            (d, a.scale(1.0 / a.norm()))
        } else {
            // Fingers flex toward −z about the lateral axis.
            (Vec3::new(0.0, 1.0, 0.0), Vec3::new(-1.0, 0.0, 0.0))
        };
        let per_joint = curl * FRAC_PI_2 * if f == 0 { 0.6 } else { 1.0 };
        let mut p = base;
        for (s, &len) in SEGMENTS[f].iter().enumerate() {
            let r: Mat3<f64> = axis_angle(axis, per_joint * (s + 1) as f64);
            p = p + (r * dir0).scale(len);
            pts[first + 1 + s] = p;
        }
    }
    pts
}

/// Per-finger curl of class `k` at normalized time `t`.
pub fn class_curls(k: usize, t: f64, amplitude: f64) -> [f64; 5] {
    let shape = SHAPES[k];
    let mut out = [0.0; 5];
    for (f, o) in out.iter_mut().enumerate() {
        let base = if shape[f] == 1 { CURLED } else { EXTENDED };
        // Phase pattern differs per class and finger; one slow cycle per video.
        let phase = ((k * 7 + f * 3) % 10) as f64 / 10.0;
        let wiggle = amplitude * (TAU * (t + phase)).sin();
        *o = (base + wiggle).clamp(0.0, 1.0);
    }
    out
}

/// Random rigid placement plus scale.
#[derive(Clone, Copy, Debug)]
struct Placement {
    rotation: Mat3<f64>,
    translation: Vec3<f64>,
    scale: f64,
}

impl Placement {
    fn draw(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Self {
        let rotation = if spec.rotation_max_deg >= 180.0 {
            Quaternion::random(rng).to_matrix()
        } else if spec.rotation_max_deg > 0.0 {
            let axis = loop {
                let v = Vec3::new(gaussian(rng), gaussian(rng), gaussian(rng));
                if v.norm() > 1e-9 {
                    break v.scale(1.0 / v.norm());
                }
            };
            let angle = rng.gen_range(0.0..=spec.rotation_max_deg.to_radians());
            axis_angle(axis, angle)
        } else {
            Mat3::identity()
        };
        let [t0, t1] = spec.translation_range;
        let mut coord = || if t0 < t1 { rng.gen_range(t0..=t1) } else { t0 };
        let translation = Vec3::new(coord(), coord(), coord());
        let [s0, s1] = spec.scale_range;
        let scale = if s0 < s1 { rng.gen_range(s0..=s1) } else { s0 };
        Self {
            rotation,
            translation,
            scale,
        }
    }

    fn apply(&self, p: Vec3<f64>) -> Vec3<f64> {
        (self.rotation * p).scale(self.scale) + self.translation
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub sequences: Vec<LandmarkSequence<f64>>,
    pub expressions: Vec<ExpressionTrack>,
    pub manifest: Manifest,
}

pub fn video_id(class: usize, index: usize) -> String {
    format!("v{class:02}_{index:03}")
}

/// Renders the dataset. Every random draw comes from one generator seeded
/// with `seed`, consumed in class-then-video order.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticDataset, SyntheticError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let provider = synthetic_provider(spec.expression_map(), spec.expression_noise, seed)
        .map_err(|e| SyntheticError::InvalidSpec(e.to_string()))?;
    let mut sequences = Vec::new();
    let mut expressions = Vec::new();
    let mut ids = Vec::new();
    for k in 0..spec.n_classes {
        let label = SyntheticSpec::class_name(k);
        for v in 0..spec.videos_per_class {
            let id = video_id(k, v);
            let [f0, f1] = spec.frames_per_video;
            let len = rng.gen_range(f0..=f1);
            let place = Placement::draw(spec, &mut rng);
            let mut frames = Vec::with_capacity(len);
            for fi in 0..len {
                let t = if len > 1 { fi as f64 / (len - 1) as f64 } else { 0.0 };
                let local = pose_hand(class_curls(k, t, spec.motion_amplitude));
                let mut world = [Vec3::zero(); NUM_JOINTS];
                for (w, &p) in world.iter_mut().zip(local.iter()) {
                    let noisy = if spec.noise_sigma > 0.0 {
                        let s = spec.noise_sigma;
                        p + Vec3::new(gaussian(&mut rng) * s, gaussian(&mut rng) * s, gaussian(&mut rng) * s)
                    } else {
                        p
                    };
                    *w = place.apply(noisy);
                }
                frames.push(HandLandmarks::new(&world).expect("finite by construction"));
            }
            let mut seq = LandmarkSequence::new(frames)
                .expect("non-empty")
                .with_label(label.clone())
                .with_video_id(id.clone())
                .with_handedness(Handedness::Right);
            seq.signer_id = Some("synthetic".to_string());
            let track = provider
                .confidences(
                    VideoRef {
                        video_id: Some(&id),
                        class: Some(k),
                    },
                    len,
                )
                .map_err(|e| SyntheticError::InvalidSpec(e.to_string()))?;
            expressions.push(ExpressionTrack {
                video_id: id.clone(),
                frames: track,
            });
            sequences.push(seq);
            ids.push((id, label.clone()));
        }
    }
    let manifest = Manifest::from_labels(ids.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    Ok(SyntheticDataset {
        spec: spec.clone(),
        sequences,
        expressions,
        manifest,
    })
}

impl SyntheticDataset {
    /// Writes `landmarks.jsonl`, `expressions.jsonl` and `manifest.json`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), SyntheticError> {
        std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
        write_landmark_file(&dir.join(LANDMARKS_FILE), LandmarkFormat::Jsonl, &self.sequences)?;
        write_expression_file(&dir.join(EXPRESSIONS_FILE), &self.expressions)?;
        self.manifest.save(&dir.join(MANIFEST_FILE))?;
        Ok(())
    }
}
