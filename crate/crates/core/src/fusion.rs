//! Per-frame feature fusion and the fully-connected softmax head.
//!
//! A fused frame is `skeleton (63) ∥ expression (7) ∥ appearance (1024)`,
//! 1094 values. The skeleton block is the canonical hand flattened joint-major
//! with `x, y, z` inside each joint.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::CanonicalHand;
use crate::expression::{ExpressionConfidence, NUM_EXPRESSIONS};
use crate::landmark::NUM_JOINTS;
use crate::nn::{cross_entropy, cross_entropy_grad, softmax};
use crate::scalar::Real;
use crate::train::{check_class_coverage, TrainError, TrainingLog};

pub const SKELETON_LEN: usize = NUM_JOINTS * 3;
pub const EXPRESSION_LEN: usize = NUM_EXPRESSIONS;
pub const APPEARANCE_LEN: usize = 1024;
pub const FEATURE_LEN: usize = SKELETON_LEN + EXPRESSION_LEN + APPEARANCE_LEN;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("{what} has length {found}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite activation")]
    NonFiniteActivation,
}

/// Which compensation channels survive into the fused vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelMask {
    pub skeleton: bool,
    pub expression: bool,
    pub appearance: bool,
}

impl ChannelMask {
    pub const ALL: Self = Self {
        skeleton: true,
        expression: true,
        appearance: true,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeature<T> {
    values: Vec<T>,
}

impl<T: Real> FrameFeature<T> {
    pub fn from_parts(skeleton: &[T], expression: &[T], appearance: &[T]) -> Result<Self, FusionError> {
        check_len("skeleton", skeleton.len(), SKELETON_LEN)?;
        check_len("expression", expression.len(), EXPRESSION_LEN)?;
        check_len("appearance", appearance.len(), APPEARANCE_LEN)?;
        let mut values = Vec::with_capacity(FEATURE_LEN);
        values.extend_from_slice(skeleton);
        values.extend_from_slice(expression);
        values.extend_from_slice(appearance);
        Ok(Self { values })
    }

    pub fn from_vec(values: Vec<T>) -> Result<Self, FusionError> {
        check_len("fused feature", values.len(), FEATURE_LEN)?;
        Ok(Self { values })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn skeleton(&self) -> &[T] {
        &self.values[..SKELETON_LEN]
    }

    pub fn expression(&self) -> &[T] {
        &self.values[SKELETON_LEN..SKELETON_LEN + EXPRESSION_LEN]
    }

    pub fn appearance(&self) -> &[T] {
        &self.values[SKELETON_LEN + EXPRESSION_LEN..]
    }

    /// Copy with the disabled channels set to zero. Width is unchanged.
    pub fn masked(&self, mask: ChannelMask) -> Self {
        let mut values = self.values.clone();
        let mut zero = |r: std::ops::Range<usize>| values[r].iter_mut().for_each(|v| *v = T::zero());
        if !mask.skeleton {
            zero(0..SKELETON_LEN);
        }
        if !mask.expression {
            zero(SKELETON_LEN..SKELETON_LEN + EXPRESSION_LEN);
        }
        if !mask.appearance {
            zero(SKELETON_LEN + EXPRESSION_LEN..FEATURE_LEN);
        }
        Self { values }
    }
}

fn check_len(what: &'static str, found: usize, expected: usize) -> Result<(), FusionError> {
    if found == expected {
        Ok(())
    } else {
        Err(FusionError::LengthMismatch {
            what,
            expected,
            found,
        })
    }
}

/// Index of joint `j`'s coordinate `axis` (0 = x) inside a fused vector.
pub const fn skeleton_index(joint: usize, axis: usize) -> usize {
    joint * 3 + axis
}

pub fn fuse_frame<T: Real>(
    c: &CanonicalHand<T>,
    e: &ExpressionConfidence<T>,
    appearance: &[T],
) -> Result<FrameFeature<T>, FusionError> {
    FrameFeature::from_parts(&c.flatten(), e.probs(), appearance)
}

/// Per-frame source of appearance embeddings.
pub trait AppearanceProvider<T: Real>: Send + Sync {
    fn embeddings(&self, video_id: Option<&str>, n_frames: usize) -> Vec<Vec<T>>;
}

/// All-zero embeddings; used when no appearance model is configured.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroAppearance;

impl<T: Real> AppearanceProvider<T> for ZeroAppearance {
    fn embeddings(&self, _video_id: Option<&str>, n_frames: usize) -> Vec<Vec<T>> {
        vec![vec![T::zero(); APPEARANCE_LEN]; n_frames]
    }
}

/// Linear layer plus softmax: `softmax(Wᵀ x + b)`.
///
/// `weights` is `input_dim × n` row-major, so `weights[i * n + k]` connects
/// input `i` to class `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameClassifier<T> {
    input_dim: usize,
    n_classes: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameGradient<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> FrameClassifier<T> {
    pub fn zeros(input_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            n_classes,
            weights: vec![T::zero(); input_dim * n_classes],
            bias: vec![T::zero(); n_classes],
        }
    }

    /// Parameters uniform in `[−scale, scale]`.
    pub fn random<R: Rng + ?Sized>(input_dim: usize, n_classes: usize, scale: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(input_dim, n_classes);
        for w in m.weights.iter_mut().chain(m.bias.iter_mut()) {
            *w = T::lit(rng.gen_range(-scale..=scale));
        }
        m
    }

    pub fn from_parts(
        input_dim: usize,
        n_classes: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self, FusionError> {
        check_len("weights", weights.len(), input_dim * n_classes)?;
        check_len("bias", bias.len(), n_classes)?;
        Ok(Self {
            input_dim,
            n_classes,
            weights,
            bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|w| w.is_finite())
    }

    pub fn logits(&self, x: &[T]) -> Result<Vec<T>, FusionError> {
        check_len("classifier input", x.len(), self.input_dim)?;
        let n = self.n_classes;
        let mut z = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            // Zero inputs contribute nothing; ablated and appearance-free
            // frames are mostly zeros.
            if xi == T::zero() {
                continue;
            }
            let row = &self.weights[i * n..(i + 1) * n];
            for (zk, &w) in z.iter_mut().zip(row) {
                *zk += w * xi;
            }
        }
        Ok(z)
    }

    pub fn predict(&self, x: &[T]) -> Result<Vec<T>, FusionError> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(FusionError::NonFiniteActivation);
        }
        let p = softmax(&self.logits(x)?);
        if p.iter().all(|v| v.is_finite()) {
            Ok(p)
        } else {
            Err(FusionError::NonFiniteActivation)
        }
    }

    pub fn loss(&self, x: &[T], label: usize) -> Result<T, FusionError> {
        Ok(cross_entropy(&self.logits(x)?, label))
    }

    /// Cross-entropy loss and its gradient for one example.
    pub fn loss_and_gradient(&self, x: &[T], label: usize) -> Result<(T, FrameGradient<T>), FusionError> {
        let mut g = FrameGradient {
            weights: vec![T::zero(); self.weights.len()],
            bias: vec![T::zero(); self.n_classes],
        };
        let loss = self.accumulate_gradient(x, label, &mut g)?;
        Ok((loss, g))
    }

    fn accumulate_gradient(&self, x: &[T], label: usize, g: &mut FrameGradient<T>) -> Result<T, FusionError> {
        let z = self.logits(x)?;
        let loss = cross_entropy(&z, label);
        let (_, dz) = cross_entropy_grad(&z, label);
        let n = self.n_classes;
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (gk, &d) in g.weights[i * n..(i + 1) * n].iter_mut().zip(&dz) {
                *gk += d * xi;
            }
        }
        for (gb, &d) in g.bias.iter_mut().zip(&dz) {
            *gb += d;
        }
        Ok(loss)
    }

    /// Mean cross-entropy over a labelled set.
    pub fn mean_loss(&self, xs: &[&[T]], labels: &[usize]) -> Result<T, FusionError> {
        let mut total = T::zero();
        for (x, &y) in xs.iter().zip(labels) {
            total += self.loss(x, y)?;
        }
        Ok(total / T::lit(xs.len().max(1) as f64))
    }
}

/// Softmax confidences of `m` for fused frame `f`.
pub fn classify_frame<T: Real>(f: &FrameFeature<T>, m: &FrameClassifier<T>) -> Result<Vec<T>, FusionError> {
    m.predict(f.as_slice())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for FrameTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 100,
            seed: 0,
            init_scale: 0.1,
        }
    }
}

/// Mini-batch gradient descent on mean cross-entropy.
///
/// Examples are reshuffled every epoch from a generator seeded with
/// `config.seed`. The log holds the full-set training loss before the first
/// epoch and after each epoch.
pub fn train_frame_classifier<T: Real>(
    xs: &[&[T]],
    labels: &[usize],
    n_classes: usize,
    config: &FrameTrainConfig,
) -> Result<(FrameClassifier<T>, TrainingLog), TrainError> {
    assert_eq!(xs.len(), labels.len(), "one label per example");
    check_class_coverage(labels, n_classes)?;
    let input_dim = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != input_dim) {
        return Err(TrainError::DimensionMismatch {
            expected: input_dim,
            found: bad.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = FrameClassifier::random(input_dim, n_classes, config.init_scale, &mut rng);
    let mut log = TrainingLog::default();
    let full_loss = |m: &FrameClassifier<T>| m.mean_loss(xs, labels).map_err(TrainError::from);
    log.push(0, full_loss(&model)?.to_f64_lossy())?;

    let lr = T::lit(config.learning_rate);
    let batch = config.batch_size.max(1);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut grad = FrameGradient {
        weights: vec![T::zero(); model.weights.len()],
        bias: vec![T::zero(); n_classes],
    };
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            grad.weights.iter_mut().for_each(|g| *g = T::zero());
            grad.bias.iter_mut().for_each(|g| *g = T::zero());
            for &i in chunk {
                model.accumulate_gradient(xs[i], labels[i], &mut grad)?;
            }
            let step = lr / T::lit(chunk.len() as f64);
            for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
                *w -= step * *g;
            }
            for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
                *b -= step * *g;
            }
        }
        log.push(epoch, full_loss(&model)?.to_f64_lossy())?;
    }
    Ok((model, log))
}
