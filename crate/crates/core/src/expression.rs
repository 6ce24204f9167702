//! Per-frame facial-expression confidences and their providers.
//!
//! Seven classes, fixed order: angry, disgusted, fear, happy, neutral, sad,
//! surprised. The expression recognizer itself lives outside this crate; its
//! output arrives through an [`ExpressionProvider`].

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{jsonl_lines, FormatError};
use crate::scalar::Real;

pub const NUM_EXPRESSIONS: usize = 7;

/// Sum tolerance for vectors built in memory.
pub const STRICT_SUM_TOL: f64 = 1e-6;
/// Sum tolerance for vectors read from an expression file.
pub const INGEST_SUM_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expression {
    Angry,
    Disgusted,
    Fear,
    Happy,
    Neutral,
    Sad,
    Surprised,
}

impl Expression {
    pub const ALL: [Expression; NUM_EXPRESSIONS] = [
        Expression::Angry,
        Expression::Disgusted,
        Expression::Fear,
        Expression::Happy,
        Expression::Neutral,
        Expression::Sad,
        Expression::Surprised,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Error)]
pub enum ExpressionError {
    #[error("expression vector has {found} entries, expected {NUM_EXPRESSIONS}")]
    WrongLength { found: usize },
    #[error("record {record}, frame {frame}: probabilities sum to {sum}")]
    NotNormalized { record: usize, frame: usize, sum: f64 },
    #[error("record {record}, frame {frame}: class {class} has probability {value}")]
    NegativeProbability {
        record: usize,
        frame: usize,
        class: usize,
        value: f64,
    },
    #[error("no expression track for video {0:?}")]
    MissingVideo(String),
    #[error("expression track for {video:?} has {found} frames, {expected} requested")]
    FrameCountMismatch {
        video: String,
        expected: usize,
        found: usize,
    },
    #[error("noise level {0} outside [0, 1]")]
    InvalidNoise(f64),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Probability vector over the seven expression classes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpressionConfidence<T> {
    probs: [T; NUM_EXPRESSIONS],
}

impl<T: Real> ExpressionConfidence<T> {
    pub fn new(probs: [T; NUM_EXPRESSIONS]) -> Result<Self, ExpressionError> {
        Self::with_tolerance(probs, T::lit(STRICT_SUM_TOL))
    }

    /// Validates entries in `[0, 1]` and `|Σ − 1| ≤ tol`. Values are kept as
    /// given; nothing is renormalized.
    pub fn with_tolerance(probs: [T; NUM_EXPRESSIONS], tol: T) -> Result<Self, ExpressionError> {
        if let Some(class) = probs.iter().position(|p| !(*p >= T::zero())) {
            return Err(ExpressionError::NegativeProbability {
                record: 0,
                frame: 0,
                class,
                value: probs[class].to_f64_lossy(),
            });
        }
        let sum: T = probs.iter().copied().sum();
        if !((sum - T::one()).abs() <= tol) || probs.iter().any(|p| *p > T::one()) {
            return Err(ExpressionError::NotNormalized {
                record: 0,
                frame: 0,
                sum: sum.to_f64_lossy(),
            });
        }
        Ok(Self { probs })
    }

    pub fn from_slice(v: &[T]) -> Result<Self, ExpressionError> {
        let probs: [T; NUM_EXPRESSIONS] = v
            .try_into()
            .map_err(|_| ExpressionError::WrongLength { found: v.len() })?;
        Self::new(probs)
    }

    pub fn uniform() -> Self {
        Self {
            probs: [T::one() / T::lit(NUM_EXPRESSIONS as f64); NUM_EXPRESSIONS],
        }
    }

    pub fn one_hot(e: Expression) -> Self {
        let mut probs = [T::zero(); NUM_EXPRESSIONS];
        probs[e.index()] = T::one();
        Self { probs }
    }

    /// `(1 − noise)·onehot(e) + noise·uniform`.
    pub fn blended(e: Expression, noise: T) -> Self {
        let floor = noise / T::lit(NUM_EXPRESSIONS as f64);
        let mut probs = [floor; NUM_EXPRESSIONS];
        probs[e.index()] = T::one() - noise + floor;
        Self { probs }
    }

    pub fn probs(&self) -> &[T; NUM_EXPRESSIONS] {
        &self.probs
    }

    pub fn get(&self, e: Expression) -> T {
        self.probs[e.index()]
    }

    /// Most likely class; ties resolve to the lowest index.
    pub fn argmax(&self) -> Expression {
        let mut best = 0;
        for i in 1..NUM_EXPRESSIONS {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        Expression::ALL[best]
    }
}

/// What a provider knows about the video it is asked about.
#[derive(Clone, Copy, Debug, Default)]
pub struct VideoRef<'a> {
    pub video_id: Option<&'a str>,
    pub class: Option<usize>,
}

/// Yields exactly one confidence vector per requested frame.
pub trait ExpressionProvider<T: Real>: Send + Sync {
    fn confidences(
        &self,
        video: VideoRef<'_>,
        n_frames: usize,
    ) -> Result<Vec<ExpressionConfidence<T>>, ExpressionError>;
}

#[derive(Clone, Debug)]
pub struct ConstantProvider<T> {
    value: ExpressionConfidence<T>,
}

pub fn constant_provider<T: Real>(c: ExpressionConfidence<T>) -> ConstantProvider<T> {
    ConstantProvider { value: c }
}

impl<T: Real> ExpressionProvider<T> for ConstantProvider<T> {
    fn confidences(
        &self,
        _video: VideoRef<'_>,
        n_frames: usize,
    ) -> Result<Vec<ExpressionConfidence<T>>, ExpressionError> {
        Ok(vec![self.value; n_frames])
    }
}

/// Emits, for a video of class `k`, the blend of `map[k]`'s one-hot with the
/// uniform vector; classes without a mapped expression get the uniform vector.
#[derive(Clone, Debug)]
pub struct SyntheticProvider<T> {
    class_map: Vec<Option<Expression>>,
    noise_level: T,
    seed: u64,
}

pub fn synthetic_provider<T: Real>(
    class_map: Vec<Option<Expression>>,
    noise_level: T,
    seed: u64,
) -> Result<SyntheticProvider<T>, ExpressionError> {
    if !(noise_level >= T::zero() && noise_level <= T::one()) {
        return Err(ExpressionError::InvalidNoise(noise_level.to_f64_lossy()));
    }
    Ok(SyntheticProvider {
        class_map,
        noise_level,
        seed,
    })
}

impl<T: Real> SyntheticProvider<T> {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn class_map(&self) -> &[Option<Expression>] {
        &self.class_map
    }

    pub fn expected(&self, class: usize) -> ExpressionConfidence<T> {
        match self.class_map.get(class).copied().flatten() {
            Some(e) => ExpressionConfidence::blended(e, self.noise_level),
            None => ExpressionConfidence::uniform(),
        }
    }
}

impl<T: Real> ExpressionProvider<T> for SyntheticProvider<T> {
    fn confidences(
        &self,
        video: VideoRef<'_>,
        n_frames: usize,
    ) -> Result<Vec<ExpressionConfidence<T>>, ExpressionError> {
        let value = video
            .class
            .map(|k| self.expected(k))
            .unwrap_or_else(ExpressionConfidence::uniform);
        Ok(vec![value; n_frames])
    }
}

/// One line of an expression file.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionTrack {
    pub video_id: String,
    pub frames: Vec<ExpressionConfidence<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TrackRecord {
    video_id: String,
    frames: Vec<Vec<f64>>,
}

pub fn read_expression_file(path: &Path) -> Result<Vec<ExpressionTrack>, ExpressionError> {
    let mut out = Vec::new();
    for (line_no, line) in jsonl_lines(path)? {
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| FormatError::parse(line_no, e))?;
        let rec: TrackRecord = serde_json::from_value(value)
            .map_err(|e| FormatError::schema(line_no, e.to_string()))?;
        let mut frames = Vec::with_capacity(rec.frames.len());
        for (frame, v) in rec.frames.iter().enumerate() {
            let probs: [f64; NUM_EXPRESSIONS] = v.as_slice().try_into().map_err(|_| {
                FormatError::schema(
                    line_no,
                    format!("frame {frame} has {} entries, expected 7", v.len()),
                )
            })?;
            let c = ExpressionConfidence::with_tolerance(probs, INGEST_SUM_TOL).map_err(
                |e| match e {
                    ExpressionError::NegativeProbability { class, value, .. } => {
                        ExpressionError::NegativeProbability {
                            record: line_no,
                            frame,
                            class,
                            value,
                        }
                    }
                    ExpressionError::NotNormalized { sum, .. } => ExpressionError::NotNormalized {
                        record: line_no,
                        frame,
                        sum,
                    },
                    other => other,
                },
            )?;
            frames.push(c);
        }
        out.push(ExpressionTrack {
            video_id: rec.video_id,
            frames,
        });
    }
    Ok(out)
}

pub fn write_expression_file(path: &Path, tracks: &[ExpressionTrack]) -> Result<(), FormatError> {
    let mut buf = String::new();
    for t in tracks {
        let rec = TrackRecord {
            video_id: t.video_id.clone(),
            frames: t.frames.iter().map(|c| c.probs().to_vec()).collect(),
        };
        buf.push_str(&serde_json::to_string(&rec).expect("serializable"));
        buf.push('\n');
    }
    crate::format::write_atomic(path, buf.as_bytes())
}

/// Serves tracks read from an expression file, keyed by video id.
#[derive(Clone, Debug, Default)]
pub struct FileProvider {
    tracks: HashMap<String, Vec<ExpressionConfidence<f64>>>,
}

impl FileProvider {
    pub fn new(tracks: Vec<ExpressionTrack>) -> Self {
        Self {
            tracks: tracks.into_iter().map(|t| (t.video_id, t.frames)).collect(),
        }
    }

    pub fn open(path: &Path) -> Result<Self, ExpressionError> {
        Ok(Self::new(read_expression_file(path)?))
    }

    pub fn track(&self, video_id: &str) -> Option<&[ExpressionConfidence<f64>]> {
        self.tracks.get(video_id).map(Vec::as_slice)
    }
}

impl ExpressionProvider<f64> for FileProvider {
    fn confidences(
        &self,
        video: VideoRef<'_>,
        n_frames: usize,
    ) -> Result<Vec<ExpressionConfidence<f64>>, ExpressionError> {
        let id = video.video_id.unwrap_or("");
        let track = self
            .tracks
            .get(id)
            .ok_or_else(|| ExpressionError::MissingVideo(id.to_owned()))?;
        if track.len() != n_frames {
            return Err(ExpressionError::FrameCountMismatch {
                video: id.to_owned(),
                expected: n_frames,
                found: track.len(),
            });
        }
        Ok(track.clone())
    }
}
