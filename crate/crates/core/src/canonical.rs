//! Hand coordinate system and canonicalization.
//!
//! The frame is anchored at the wrist (joint 0). With `a = D5 − D0` (index
//! hinge) and `b = D9 − D0` (middle hinge):
//!
//! * `Ẑ = a / |a|`
//! * `Ŷ = (a × b) / |a × b|`, the palm normal
//! * `X̂ = Ŷ × Ẑ`
//!
//! `R = [X̂ | Ŷ | Ẑ]` maps hand coordinates to world coordinates, so `Rᵀ`
//! maps the wrist-relative, scale-normalized world points into the hand frame.

use thiserror::Error;

use crate::geometry::{Mat3, Vec3};
use crate::landmark::{HandLandmarks, Handedness, JointIndex, NUM_JOINTS};
use crate::scalar::Real;

/// Threshold on `|a|`, `|b|` and on the sine of the angle between them.
pub const DEGENERACY_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateFrame {
    #[error("degenerate hand frame: wrist coincides with a palm hinge")]
    ZeroPalmVector,
    #[error("degenerate hand frame: wrist, index hinge and middle hinge are collinear")]
    CollinearPalm,
}

/// Orthonormal hand frame expressed in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandFrame<T> {
    pub origin: Vec3<T>,
    /// Columns are the hand X, Y, Z axes.
    pub axes: Mat3<T>,
}

impl<T: Real> HandFrame<T> {
    pub fn x_axis(&self) -> Vec3<T> {
        self.axes.column(0)
    }

    pub fn y_axis(&self) -> Vec3<T> {
        self.axes.column(1)
    }

    pub fn z_axis(&self) -> Vec3<T> {
        self.axes.column(2)
    }

    /// World direction → hand-frame coordinates (`Rᵀ v`).
    pub fn world_to_hand(&self, v: Vec3<T>) -> Vec3<T> {
        self.axes.tr_mul_vec(v)
    }

    /// Hand-frame coordinates → world direction (`R v`).
    pub fn hand_to_world(&self, v: Vec3<T>) -> Vec3<T> {
        self.axes.mul_vec(v)
    }
}

/// Wrist-relative, scale-normalized coordinates in the hand frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalHand<T> {
    points: [Vec3<T>; NUM_JOINTS],
}

impl<T: Real> CanonicalHand<T> {
    pub fn points(&self) -> &[Vec3<T>; NUM_JOINTS] {
        &self.points
    }

    /// Rebuilds a canonical hand from stored coordinates (e.g. read back from
    /// disk). No geometric checks are applied beyond arity and finiteness.
    pub fn from_points(points: &[Vec3<T>]) -> Result<Self, crate::landmark::LandmarkError> {
        let h = HandLandmarks::new(points)?;
        Ok(Self {
            points: *h.points(),
        })
    }

    pub fn zeros() -> Self {
        Self {
            points: [Vec3::zero(); NUM_JOINTS],
        }
    }

    /// Joint-major `x, y, z` flattening (63 values).
    pub fn flatten(&self) -> Vec<T> {
        self.points.iter().flat_map(|p| p.to_array()).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.points
            .iter()
            .zip(other.points.iter())
            .map(|(a, b)| a.max_abs_diff(*b))
            .fold(T::zero(), T::max)
    }
}

fn palm_vectors<T: Real>(h: &HandLandmarks<T>) -> Result<(Vec3<T>, Vec3<T>), DegenerateFrame> {
    let eps = T::lit(DEGENERACY_EPS);
    let a = h.joint(JointIndex::INDEX_MCP) - h.wrist();
    let b = h.joint(JointIndex::MIDDLE_MCP) - h.wrist();
    if !(a.norm() > eps) || !(b.norm() > eps) {
        return Err(DegenerateFrame::ZeroPalmVector);
    }
    Ok((a, b))
}

pub fn build_hand_frame<T: Real>(h: &HandLandmarks<T>) -> Result<HandFrame<T>, DegenerateFrame> {
    let eps = T::lit(DEGENERACY_EPS);
    let (a, b) = palm_vectors(h)?;
    let (na, nb) = (a.norm(), b.norm());
    let normal = a.cross(b);
    let nn = normal.norm();
    if !(nn > eps * na * nb) {
        return Err(DegenerateFrame::CollinearPalm);
    }
    let z = a.scale(T::one() / na);
    let y = normal.scale(T::one() / nn);
    let x = y.cross(z);
    Ok(HandFrame {
        origin: h.wrist(),
        axes: Mat3::from_columns(x, y, z),
    })
}

/// `(D_i − D0) / |D5 − D0|` for every joint.
pub fn translate_normalize<T: Real>(
    h: &HandLandmarks<T>,
) -> Result<[Vec3<T>; NUM_JOINTS], DegenerateFrame> {
    let origin = h.wrist();
    let s = (h.joint(JointIndex::INDEX_MCP) - origin).norm();
    if !(s > T::lit(DEGENERACY_EPS)) {
        return Err(DegenerateFrame::ZeroPalmVector);
    }
    let mut out = [Vec3::zero(); NUM_JOINTS];
    for (o, &p) in out.iter_mut().zip(h.points().iter()) {
        let d = p - origin;
        *o = Vec3::new(d.x / s, d.y / s, d.z / s);
    }
    Ok(out)
}

pub fn canonicalize<T: Real>(h: &HandLandmarks<T>) -> Result<CanonicalHand<T>, DegenerateFrame> {
    let frame = build_hand_frame(h)?;
    let normalized = translate_normalize(h)?;
    let mut points = [Vec3::zero(); NUM_JOINTS];
    for (o, &p) in points.iter_mut().zip(normalized.iter()) {
        *o = frame.world_to_hand(p);
    }
    // Rᵀ·0 is exactly zero already; pinned so the anchor holds bitwise.
    points[0] = Vec3::zero();
    Ok(CanonicalHand { points })
}

/// Left-hand mirroring applied before canonicalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MirrorConfig {
    pub mirror_left: bool,
}

/// Reflects `x ↦ −x` when the hand is a left hand and mirroring is enabled.
pub fn mirror_if_left<T: Real>(
    h: &HandLandmarks<T>,
    handedness: Handedness,
    config: MirrorConfig,
) -> HandLandmarks<T> {
    if handedness == Handedness::Left && config.mirror_left {
        h.map(|p| Vec3::new(-p.x, p.y, p.z))
            .expect("negation preserves finiteness")
    } else {
        h.clone()
    }
}
