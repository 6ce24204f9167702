//! Hand landmark types, joint numbering and temporal resampling.
//!
//! Joints follow the MediaPipe hand numbering: 0 is the wrist, 1-4 the thumb,
//! and each remaining finger occupies four consecutive indices starting at its
//! palm hinge (5 index, 9 middle, 13 ring, 17 pinky).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::scalar::Real;

pub const NUM_JOINTS: usize = 21;

/// Number of frames every video is resampled to.
pub const SEQUENCE_LEN: usize = 101;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandmarkError {
    #[error("expected {NUM_JOINTS} joints, found {found}")]
    WrongArity { found: usize },
    #[error("non-finite coordinate at joint {joint}")]
    NonFiniteCoordinate { joint: usize },
    #[error("joint index {0} out of range 0..=20")]
    InvalidJoint(usize),
    #[error("landmark sequence has no frames")]
    EmptySequence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointIndex(u8);

impl JointIndex {
    pub const WRIST: Self = Self(0);
    pub const THUMB_CMC: Self = Self(1);
    pub const INDEX_MCP: Self = Self(5);
    pub const MIDDLE_MCP: Self = Self(9);
    pub const RING_MCP: Self = Self(13);
    pub const PINKY_MCP: Self = Self(17);

    pub fn new(value: usize) -> Result<Self, LandmarkError> {
        if value < NUM_JOINTS {
            Ok(Self(value as u8))
        } else {
            Err(LandmarkError::InvalidJoint(value))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Joints 0, 5, 9, 13 and 17 do not move relative to each other unless the
    /// wrist rotates.
    pub fn is_palm(self) -> bool {
        matches!(self.0, 0 | 5 | 9 | 13 | 17)
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..NUM_JOINTS as u8).map(Self)
    }
}

impl fmt::Display for JointIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
    #[default]
    Unknown,
}

impl fmt::Display for Handedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Handedness::Left => "left",
            Handedness::Right => "right",
            Handedness::Unknown => "unknown",
        })
    }
}

impl std::str::FromStr for Handedness {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Self::Left),
            "right" => Ok(Self::Right),
            "unknown" | "" => Ok(Self::Unknown),
            other => Err(format!("unknown handedness {other:?}")),
        }
    }
}

/// The 21 joint positions of one hand in one frame, in world coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct HandLandmarks<T> {
    points: [Vec3<T>; NUM_JOINTS],
}

impl<T: Real> HandLandmarks<T> {
    /// Validates arity and finiteness.
    pub fn new(points: &[Vec3<T>]) -> Result<Self, LandmarkError> {
        if points.len() != NUM_JOINTS {
            return Err(LandmarkError::WrongArity {
                found: points.len(),
            });
        }
        if let Some(joint) = points.iter().position(|p| !p.is_finite()) {
            return Err(LandmarkError::NonFiniteCoordinate { joint });
        }
        let mut out = [Vec3::zero(); NUM_JOINTS];
        out.copy_from_slice(points);
        Ok(Self { points: out })
    }

    pub fn points(&self) -> &[Vec3<T>; NUM_JOINTS] {
        &self.points
    }

    pub fn joint(&self, j: JointIndex) -> Vec3<T> {
        self.points[j.get()]
    }

    pub fn wrist(&self) -> Vec3<T> {
        self.points[0]
    }

    /// Applies `f` to every point. The result is re-validated.
    pub fn map(&self, f: impl Fn(Vec3<T>) -> Vec3<T>) -> Result<Self, LandmarkError> {
        let mapped: Vec<Vec3<T>> = self.points.iter().map(|&p| f(p)).collect();
        Self::new(&mapped)
    }

    pub fn to_arrays(&self) -> Vec<[T; 3]> {
        self.points.iter().map(|p| p.to_array()).collect()
    }
}

/// Validates raw `(x, y, z)` triples into a [`HandLandmarks`].
pub fn validate_landmarks<T: Real>(raw: &[[T; 3]]) -> Result<HandLandmarks<T>, LandmarkError> {
    let pts: Vec<Vec3<T>> = raw.iter().map(|&a| Vec3::from_array(a)).collect();
    HandLandmarks::new(&pts)
}

/// One video's worth of landmark frames plus metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSequence<T> {
    frames: Vec<HandLandmarks<T>>,
    pub video_id: Option<String>,
    pub label: Option<String>,
    pub signer_id: Option<String>,
    pub handedness: Handedness,
}

impl<T: Real> LandmarkSequence<T> {
    pub fn new(frames: Vec<HandLandmarks<T>>) -> Result<Self, LandmarkError> {
        if frames.is_empty() {
            return Err(LandmarkError::EmptySequence);
        }
        Ok(Self {
            frames,
            video_id: None,
            label: None,
            signer_id: None,
            handedness: Handedness::Unknown,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_video_id(mut self, id: impl Into<String>) -> Self {
        self.video_id = Some(id.into());
        self
    }

    pub fn with_handedness(mut self, h: Handedness) -> Self {
        self.handedness = h;
        self
    }

    pub fn frames(&self) -> &[HandLandmarks<T>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Same metadata, new frames.
    pub fn replace_frames(&self, frames: Vec<HandLandmarks<T>>) -> Result<Self, LandmarkError> {
        if frames.is_empty() {
            return Err(LandmarkError::EmptySequence);
        }
        Ok(Self {
            frames,
            video_id: self.video_id.clone(),
            label: self.label.clone(),
            signer_id: self.signer_id.clone(),
            handedness: self.handedness,
        })
    }
}

/// Source frame index for output frame `k` when `input_len` frames are
/// mapped onto [`SEQUENCE_LEN`]: `round(k · (T − 1) / 100)`.
///
/// Computed in integers; ties round up, matching `f64::round` on the exact
/// rational value.
pub fn resample_index(k: usize, input_len: usize) -> usize {
    let span = SEQUENCE_LEN - 1;
    let num = k * (input_len - 1);
    (2 * num + span) / (2 * span)
}

/// Picks 101 frames by nearest-index rounding. No interpolation, so every
/// output frame is an input frame.
pub fn resample_to_101<T: Real>(
    seq: &LandmarkSequence<T>,
) -> Result<LandmarkSequence<T>, LandmarkError> {
    let frames = resample_frames(seq.frames())?;
    seq.replace_frames(frames)
}

/// [`resample_to_101`] over any frame-aligned slice.
pub fn resample_frames<F: Clone>(frames: &[F]) -> Result<Vec<F>, LandmarkError> {
    if frames.is_empty() {
        return Err(LandmarkError::EmptySequence);
    }
    Ok((0..SEQUENCE_LEN)
        .map(|k| frames[resample_index(k, frames.len())].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand(offset: f64) -> HandLandmarks<f64> {
        let raw: Vec<[f64; 3]> = (0..21)
            .map(|i| [i as f64 + offset, 2.0 * i as f64, -(i as f64)])
            .collect();
        validate_landmarks(&raw).unwrap()
    }

    #[test]
    fn validate_passes_through_ordering() {
        let raw: Vec<[f64; 3]> = (0..21).map(|i| [i as f64, 0.5, -1.0]).collect();
        let h = validate_landmarks(&raw).unwrap();
        assert_eq!(h.to_arrays(), raw);
    }

    #[test]
    fn validate_rejects_wrong_arity() {
        let raw = vec![[0.0f64; 3]; 20];
        assert_eq!(
            validate_landmarks(&raw),
            Err(LandmarkError::WrongArity { found: 20 })
        );
    }

    #[test]
    fn validate_reports_nonfinite_joint() {
        let mut raw = vec![[0.0f64; 3]; 21];
        raw[3] = [f64::NAN, 0.0, 0.0];
        assert_eq!(
            validate_landmarks(&raw),
            Err(LandmarkError::NonFiniteCoordinate { joint: 3 })
        );
        raw[3] = [0.0, 0.0, f64::INFINITY];
        assert_eq!(
            validate_landmarks(&raw),
            Err(LandmarkError::NonFiniteCoordinate { joint: 3 })
        );
    }

    #[test]
    fn joint_index_bounds() {
        assert!(JointIndex::new(20).is_ok());
        assert_eq!(JointIndex::new(21), Err(LandmarkError::InvalidJoint(21)));
        assert!(JointIndex::INDEX_MCP.is_palm());
        assert!(!JointIndex::new(8).unwrap().is_palm());
    }

    #[test]
    fn resample_identity_at_101() {
        let seq = LandmarkSequence::new((0..101).map(|i| hand(i as f64)).collect()).unwrap();
        assert_eq!(resample_to_101(&seq).unwrap(), seq);
    }

    #[test]
    fn resample_single_frame_repeats() {
        let seq = LandmarkSequence::new(vec![hand(3.0)]).unwrap();
        let out = resample_to_101(&seq).unwrap();
        assert_eq!(out.len(), 101);
        assert!(out.frames().iter().all(|f| *f == hand(3.0)));
    }

    #[test]
    fn resample_201_picks_even_frames() {
        // Brute-force oracle: exact rational rounding, ties up.
        let oracle: Vec<usize> = (0..101)
            .map(|k| ((k * 200) as f64 / 100.0).round() as usize)
            .collect();
        let expected: Vec<usize> = (0..101).map(|k| 2 * k).collect();
        assert_eq!(oracle, expected);
        let seq = LandmarkSequence::new((0..201).map(|i| hand(i as f64)).collect()).unwrap();
        let out = resample_to_101(&seq).unwrap();
        for (k, f) in out.frames().iter().enumerate() {
            assert_eq!(*f, hand(expected[k] as f64));
        }
    }

    #[test]
    fn resample_index_matches_float_rounding() {
        for t in 1..400 {
            for k in 0..101 {
                let exact = (k * (t - 1)) as f64 / 100.0;
                // f64::round rounds half away from zero, i.e. up here.
                assert_eq!(resample_index(k, t), exact.round() as usize, "k={k} t={t}");
            }
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        assert_eq!(
            LandmarkSequence::<f64>::new(vec![]),
            Err(LandmarkError::EmptySequence)
        );
        assert_eq!(
            resample_frames::<u8>(&[]),
            Err(LandmarkError::EmptySequence)
        );
    }
}
