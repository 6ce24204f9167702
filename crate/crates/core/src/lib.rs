//! Hand-skeleton canonicalization and feature-fusion sequence classification
//! for isolated sign recognition.
//!
//! The pipeline per video:
//!
//! 1. resample the landmark stream to 101 frames ([`landmark`]),
//! 2. map every frame into a wrist-anchored, scale-normalized hand coordinate
//!    system ([`canonical`]),
//! 3. splice the 63 skeleton values with a 7-way expression confidence and a
//!    1024-wide appearance embedding, then classify each frame with a softmax
//!    head ([`fusion`]),
//! 4. feed the 101 per-frame confidence vectors to an LSTM ([`lstm`]).
//!
//! [`pipeline`] wires these together with synthetic data generation,
//! stratified splitting and channel ablations.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); file formats
//! and the pipeline work in `f64`. Aliases for the common instantiations are
//! exported below.

pub mod canonical;
pub mod checkpoint;
pub mod expression;
pub mod format;
pub mod fusion;
pub mod geometry;
pub mod landmark;
pub mod landmark_io;
pub mod lstm;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod split;
pub mod synthetic;
pub mod train;

pub use canonical::{
    build_hand_frame, canonicalize, mirror_if_left, translate_normalize, DegenerateFrame,
};
pub use expression::{Expression, ExpressionError, ExpressionProvider};
pub use fusion::{classify_frame, fuse_frame, FusionError};
pub use landmark::{resample_to_101, validate_landmarks, Handedness, JointIndex, LandmarkError};
pub use scalar::Real;
pub use train::{TrainError, TrainingLog};

pub type Vec3f = geometry::Vec3<f32>;
pub type Vec3d = geometry::Vec3<f64>;
pub type Mat3d = geometry::Mat3<f64>;

pub type HandLandmarksF32 = landmark::HandLandmarks<f32>;
pub type HandLandmarksF64 = landmark::HandLandmarks<f64>;
pub type LandmarkSequenceF64 = landmark::LandmarkSequence<f64>;
pub type HandFrameF32 = canonical::HandFrame<f32>;
pub type HandFrameF64 = canonical::HandFrame<f64>;
pub type CanonicalHandF32 = canonical::CanonicalHand<f32>;
pub type CanonicalHandF64 = canonical::CanonicalHand<f64>;
pub type ExpressionConfidenceF64 = expression::ExpressionConfidence<f64>;
pub type FrameFeatureF64 = fusion::FrameFeature<f64>;
pub type FrameClassifierF32 = fusion::FrameClassifier<f32>;
pub type FrameClassifierF64 = fusion::FrameClassifier<f64>;
pub type LstmModelF32 = lstm::LstmModel<f32>;
pub type LstmModelF64 = lstm::LstmModel<f64>;
pub type SequenceSampleF64 = lstm::SequenceSample<f64>;
