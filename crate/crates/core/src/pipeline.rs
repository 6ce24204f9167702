//! Two-stage training pipeline and the four-way channel ablation.
//!
//! Stage 1 trains the per-frame softmax head on fused frames (every frame
//! labelled with its video's class). Stage 2 runs that head over all 101
//! frames of every video and trains the LSTM on the resulting confidence
//! sequences. Ablation modes zero channels instead of narrowing the input, so
//! every mode shares one architecture.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{canonicalize, mirror_if_left, CanonicalHand, DegenerateFrame, MirrorConfig};
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::expression::{
    constant_provider, ExpressionConfidence, ExpressionError, ExpressionProvider, FileProvider,
    VideoRef,
};
use crate::format::{jsonl_lines, write_atomic, FormatError};
use crate::fusion::{
    fuse_frame, train_frame_classifier, AppearanceProvider, ChannelMask, FrameClassifier,
    FrameFeature, FrameTrainConfig, ZeroAppearance, EXPRESSION_LEN, SKELETON_LEN,
};
use crate::landmark::{resample_index, LandmarkError, LandmarkSequence, SEQUENCE_LEN};
use crate::landmark_io::{read_landmark_file, write_canonical_file, LandmarkFormat};
use crate::lstm::{train_lstm, LstmError, LstmModel, LstmTrainConfig, SequenceSample};
use crate::metrics::{evaluate, metrics_from_predictions, EvalError, Metrics};
use crate::nn::argmax;
use crate::split::{split_dataset, Manifest, SplitError};
use crate::synthetic::{generate_synthetic, SyntheticError, SyntheticSpec};
use crate::train::{TrainError, TrainingLog};

pub const CANONICAL_FILE: &str = "canonical.jsonl";
pub const FEATURES_FILE: &str = "features.jsonl";
pub const FRAME_MODEL_FILE: &str = "frame_model.json";
pub const STAGE1_FILE: &str = "stage1.json";
pub const SEQUENCES_FILE: &str = "sequences.jsonl";
pub const LSTM_MODEL_FILE: &str = "lstm_model.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TXT: &str = "ablation.txt";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("video {video:?}, frame {frame}: {source}")]
    Degenerate {
        video: String,
        frame: usize,
        source: DegenerateFrame,
    },
    #[error(transparent)]
    Landmark(#[from] LandmarkError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Expression(#[from] ExpressionError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Fusion(#[from] crate::fusion::FusionError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Skeleton and expression channels zeroed.
    Baseline,
    SkeletonOnly,
    ExpressionOnly,
    #[default]
    Fused,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::Baseline,
        AblationMode::SkeletonOnly,
        AblationMode::ExpressionOnly,
        AblationMode::Fused,
    ];

    pub fn mask(self) -> ChannelMask {
        let (skeleton, expression) = match self {
            AblationMode::Baseline => (false, false),
            AblationMode::SkeletonOnly => (true, false),
            AblationMode::ExpressionOnly => (false, true),
            AblationMode::Fused => (true, true),
        };
        ChannelMask {
            skeleton,
            expression,
            appearance: true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Baseline => "baseline",
            AblationMode::SkeletonOnly => "skeleton_only",
            AblationMode::ExpressionOnly => "expression_only",
            AblationMode::Fused => "fused",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown ablation mode {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Landmark file (`.csv` or JSONL). When absent, a synthetic dataset is
    /// generated from `synthetic`.
    pub landmarks: Option<PathBuf>,
    /// Expression JSONL keyed by video id. When absent with a landmark file,
    /// every frame gets the uniform vector.
    pub expressions: Option<PathBuf>,
    /// Precomputed split (`{"train": manifest, "test": manifest}`).
    pub split: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Fraction of each class used for training.
    pub train_fraction: f64,
    /// Master seed. Data generation and splitting use it directly; stage 1
    /// uses `seed + 1`, stage 2 `seed + 2`.
    pub seed: u64,
    pub ablation_mode: AblationMode,
    pub mirror_left: bool,
    pub frame: FrameTrainConfig,
    pub lstm: LstmTrainConfig,
    pub synthetic: SyntheticSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            landmarks: None,
            expressions: None,
            split: None,
            output_dir: None,
            train_fraction: 0.8,
            seed: 0,
            ablation_mode: AblationMode::Fused,
            mirror_left: false,
            frame: FrameTrainConfig::default(),
            lstm: LstmTrainConfig::default(),
            synthetic: SyntheticSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("serializable")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(PipelineError::Config(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        for p in [&self.landmarks, &self.expressions, &self.split].into_iter().flatten() {
            if !p.exists() {
                return Err(PipelineError::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.expressions.is_some() && self.landmarks.is_none() {
            return Err(PipelineError::Config(
                "expressions given without a landmark file".into(),
            ));
        }
        if self.frame.batch_size == 0 || self.lstm.batch_size == 0 || self.lstm.hidden_dim == 0 {
            return Err(PipelineError::Config("batch sizes and hidden_dim must be positive".into()));
        }
        Ok(())
    }

    fn frame_config(&self) -> FrameTrainConfig {
        FrameTrainConfig {
            seed: self.seed.wrapping_add(1),
            ..self.frame.clone()
        }
    }

    fn lstm_config(&self) -> LstmTrainConfig {
        LstmTrainConfig {
            seed: self.seed.wrapping_add(2),
            ..self.lstm.clone()
        }
    }
}

/// Train and test manifests stored together.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFile {
    pub train: Manifest,
    pub test: Manifest,
}

impl SplitFile {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).expect("serializable");
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One video after resampling and canonicalization.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedVideo {
    pub video_id: String,
    pub label: String,
    pub class: usize,
    pub split: Split,
    pub canonical: Vec<CanonicalHand<f64>>,
    pub expression: Vec<ExpressionConfidence<f64>>,
    pub appearance: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedDataset {
    pub classes: Vec<String>,
    pub videos: Vec<PreparedVideo>,
}

impl PreparedDataset {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn split_counts(&self) -> (usize, usize) {
        let train = self.videos.iter().filter(|v| v.split == Split::Train).count();
        (train, self.videos.len() - train)
    }
}

/// Resamples one video to 101 frames, canonicalizes every frame and aligns
/// the expression and appearance tracks with the same frame indices.
pub fn prepare_video(
    seq: &LandmarkSequence<f64>,
    class: usize,
    split: Split,
    expressions: &dyn ExpressionProvider<f64>,
    appearance: &dyn AppearanceProvider<f64>,
    mirror: MirrorConfig,
) -> Result<PreparedVideo, PipelineError> {
    let video_id = seq.video_id.clone().unwrap_or_default();
    let raw_len = seq.len();
    let indices: Vec<usize> = (0..SEQUENCE_LEN).map(|k| resample_index(k, raw_len)).collect();
    let mut canonical = Vec::with_capacity(SEQUENCE_LEN);
    for &i in &indices {
        let h = mirror_if_left(&seq.frames()[i], seq.handedness, mirror);
        canonical.push(canonicalize(&h).map_err(|source| PipelineError::Degenerate {
            video: video_id.clone(),
            frame: i,
            source,
        })?);
    }
    let track = expressions.confidences(
        VideoRef {
            video_id: Some(&video_id),
            class: Some(class),
        },
        raw_len,
    )?;
    let app = appearance.embeddings(Some(&video_id), raw_len);
    Ok(PreparedVideo {
        label: seq.label.clone().unwrap_or_default(),
        video_id,
        class,
        split,
        canonical,
        expression: indices.iter().map(|&i| track[i]).collect(),
        appearance: indices.iter().map(|&i| app[i].clone()).collect(),
    })
}

fn load_sequences(config: &PipelineConfig) -> Result<(Vec<LandmarkSequence<f64>>, Box<dyn ExpressionProvider<f64>>), PipelineError> {
    match &config.landmarks {
        Some(path) => {
            let mut seqs = read_landmark_file(path, LandmarkFormat::from_path(path))?;
            for (i, s) in seqs.iter_mut().enumerate() {
                if s.video_id.is_none() {
                    s.video_id = Some(format!("video_{i}"));
                }
                if s.label.is_none() {
                    return Err(PipelineError::Config(format!(
                        "video {:?} has no label",
                        s.video_id.as_deref().unwrap_or("")
                    )));
                }
            }
            let provider: Box<dyn ExpressionProvider<f64>> = match &config.expressions {
                Some(p) => Box::new(FileProvider::open(p)?),
                None => Box::new(constant_provider(ExpressionConfidence::uniform())),
            };
            Ok((seqs, provider))
        }
        None => {
            let d = generate_synthetic(&config.synthetic, config.seed)?;
            Ok((d.sequences, Box::new(FileProvider::new(d.expressions))))
        }
    }
}

/// Loads (or generates) the data, splits it and canonicalizes every video.
pub fn prepare(config: &PipelineConfig) -> Result<PreparedDataset, PipelineError> {
    config.validate()?;
    let (seqs, provider) = load_sequences(config)?;
    let ids: Vec<(String, String)> = seqs
        .iter()
        .map(|s| (s.video_id.clone().unwrap_or_default(), s.label.clone().unwrap_or_default()))
        .collect();
    {
        let mut seen = std::collections::HashSet::new();
        if let Some((dup, _)) = ids.iter().find(|(id, _)| !seen.insert(id.as_str())) {
            return Err(PipelineError::Config(format!("duplicate video id {dup:?}")));
        }
    }
    let manifest = Manifest::from_labels(ids.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    let (train, _test) = match &config.split {
        Some(p) => {
            let f = SplitFile::load(p)?;
            (f.train, f.test)
        }
        None => split_dataset(&manifest, config.train_fraction, config.seed)?,
    };
    let train_ids: std::collections::HashSet<&str> =
        train.videos.iter().map(|v| v.video_id.as_str()).collect();
    let mirror = MirrorConfig {
        mirror_left: config.mirror_left,
    };
    let mut videos = Vec::with_capacity(seqs.len());
    for (seq, entry) in seqs.iter().zip(&manifest.videos) {
        let split = if train_ids.contains(entry.video_id.as_str()) {
            Split::Train
        } else {
            Split::Test
        };
        videos.push(prepare_video(seq, entry.class, split, provider.as_ref(), &ZeroAppearance, mirror)?);
    }
    let data = PreparedDataset {
        classes: manifest.classes,
        videos,
    };
    let (n_train, n_test) = data.split_counts();
    if n_train == 0 || n_test == 0 {
        return Err(PipelineError::Config("split leaves an empty train or test set".into()));
    }
    info!(
        "prepared {} videos ({} train / {} test) over {} classes",
        data.videos.len(),
        n_train,
        n_test,
        data.n_classes()
    );
    Ok(data)
}

/// Writes the canonical 101-frame landmarks of every video.
pub fn write_canonical_artifact(data: &PreparedDataset, path: &Path) -> Result<(), PipelineError> {
    let mut meta = Vec::with_capacity(data.videos.len());
    let mut frames = Vec::with_capacity(data.videos.len());
    for v in &data.videos {
        let hands: Vec<_> = v
            .canonical
            .iter()
            .map(|c| crate::landmark::HandLandmarks::new(c.points()))
            .collect::<Result<_, _>>()?;
        meta.push(
            LandmarkSequence::new(hands)?
                .with_video_id(v.video_id.clone())
                .with_label(v.label.clone()),
        );
        frames.push(v.canonical.clone());
    }
    write_canonical_file(path, &meta, &frames)?;
    Ok(())
}

/// Fused, masked feature vectors for every frame of `v`.
pub fn video_features(v: &PreparedVideo, mask: ChannelMask) -> Result<Vec<FrameFeature<f64>>, PipelineError> {
    v.canonical
        .iter()
        .zip(&v.expression)
        .zip(&v.appearance)
        .map(|((c, e), a)| Ok(fuse_frame(c, e, a)?.masked(mask)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameStageSummary {
    pub epoch_losses: Vec<f64>,
    pub train_frame_accuracy: f64,
    pub test_frame_accuracy: f64,
}

/// Stage-1 output for one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub video_id: String,
    pub label: String,
    pub class: usize,
    pub split: Split,
    pub steps: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Output {
    pub mode: AblationMode,
    pub classes: Vec<String>,
    pub model: FrameClassifier<f64>,
    pub summary: FrameStageSummary,
    pub sequences: Vec<SequenceRecord>,
}

/// Persisted alongside `sequences.jsonl` so stage 2 can resume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Meta {
    pub mode: AblationMode,
    pub classes: Vec<String>,
    pub summary: FrameStageSummary,
}

pub fn run_stage1(
    data: &PreparedDataset,
    mode: AblationMode,
    config: &PipelineConfig,
) -> Result<Stage1Output, PipelineError> {
    let mask = mode.mask();
    let n = data.n_classes();
    let mut buf: Vec<FrameFeature<f64>> = Vec::new();
    let mut labels = Vec::new();
    for v in data.videos.iter().filter(|v| v.split == Split::Train) {
        buf.extend(video_features(v, mask)?);
        labels.extend(std::iter::repeat_n(v.class, SEQUENCE_LEN));
    }
    let xs: Vec<&[f64]> = buf.iter().map(FrameFeature::as_slice).collect();
    let (model, log) = train_frame_classifier(&xs, &labels, n, &config.frame_config())?;
    drop(xs);
    drop(buf);
    info!("[{mode}] stage 1 final loss {:?}", log.final_loss());

    let mut sequences = Vec::with_capacity(data.videos.len());
    let (mut tr_truth, mut tr_pred, mut te_truth, mut te_pred) = (vec![], vec![], vec![], vec![]);
    for v in &data.videos {
        let mut steps = Vec::with_capacity(SEQUENCE_LEN);
        for f in video_features(v, mask)? {
            let p = model.predict(f.as_slice())?;
            let (truth, pred) = match v.split {
                Split::Train => (&mut tr_truth, &mut tr_pred),
                Split::Test => (&mut te_truth, &mut te_pred),
            };
            truth.push(v.class);
            pred.push(argmax(&p));
            steps.push(p);
        }
        sequences.push(SequenceRecord {
            video_id: v.video_id.clone(),
            label: v.label.clone(),
            class: v.class,
            split: v.split,
            steps,
        });
    }
    let summary = FrameStageSummary {
        epoch_losses: log.epoch_losses,
        train_frame_accuracy: metrics_from_predictions(&tr_truth, &tr_pred, n)?.accuracy,
        test_frame_accuracy: metrics_from_predictions(&te_truth, &te_pred, n)?.accuracy,
    };
    Ok(Stage1Output {
        mode,
        classes: data.classes.clone(),
        model,
        summary,
        sequences,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub mode: AblationMode,
    pub classes: Vec<String>,
    pub n_train_videos: usize,
    pub n_test_videos: usize,
    pub frame_stage: FrameStageSummary,
    pub lstm_epoch_losses: Vec<f64>,
    pub test: Metrics,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}", self.mode);
        let _ = writeln!(
            s,
            "videos: {} train / {} test, {} classes",
            self.n_train_videos,
            self.n_test_videos,
            self.classes.len()
        );
        let _ = writeln!(
            s,
            "stage 1: final loss {:.6}, frame accuracy train {:.4} test {:.4}",
            self.frame_stage.epoch_losses.last().copied().unwrap_or(f64::NAN),
            self.frame_stage.train_frame_accuracy,
            self.frame_stage.test_frame_accuracy
        );
        let _ = writeln!(
            s,
            "stage 2: final loss {:.6}",
            self.lstm_epoch_losses.last().copied().unwrap_or(f64::NAN)
        );
        let _ = writeln!(
            s,
            "test accuracy: {:.4} ({}/{})",
            self.test.accuracy, self.test.correct, self.test.total
        );
        for (name, acc) in self.classes.iter().zip(&self.test.per_class_accuracy) {
            match acc {
                Some(a) => {
                    let _ = writeln!(s, "  {name:<16} {a:.4}");
                }
                None => {
                    let _ = writeln!(s, "  {name:<16} -");
                }
            }
        }
        s
    }
}

fn samples_for(records: &[SequenceRecord], split: Split) -> Result<Vec<SequenceSample<f64>>, PipelineError> {
    records
        .iter()
        .filter(|r| r.split == split)
        .map(|r| SequenceSample::new(&r.steps, r.class).map_err(PipelineError::from))
        .collect()
}

/// Trains the LSTM on the train sequences and evaluates it on the test ones.
pub fn run_stage2(
    stage1: &Stage1Meta,
    sequences: &[SequenceRecord],
    config: &PipelineConfig,
) -> Result<(LstmModel<f64>, TrainingLog, PipelineReport), PipelineError> {
    let n = stage1.classes.len();
    let train = samples_for(sequences, Split::Train)?;
    let test = samples_for(sequences, Split::Test)?;
    let (model, log) = train_lstm(&train, n, &config.lstm_config())?;
    info!("[{}] stage 2 final loss {:?}", stage1.mode, log.final_loss());
    let test_metrics = evaluate(&model, &test)?;
    let report = PipelineReport {
        mode: stage1.mode,
        classes: stage1.classes.clone(),
        n_train_videos: train.len(),
        n_test_videos: test.len(),
        frame_stage: stage1.summary.clone(),
        lstm_epoch_losses: log.epoch_losses.clone(),
        test: test_metrics,
    };
    Ok((model, log, report))
}

pub fn write_sequences(path: &Path, records: &[SequenceRecord]) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("serializable");
        buf.push(b'\n');
    }
    write_atomic(path, &buf)?;
    Ok(())
}

pub fn read_sequences(path: &Path) -> Result<Vec<SequenceRecord>, PipelineError> {
    jsonl_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text)
                .map_err(|e| PipelineError::Format(FormatError::schema(line, e.to_string())))
        })
        .collect()
}

#[derive(Serialize)]
struct FeatureRecord<'a> {
    video_id: &'a str,
    label: &'a str,
    class: usize,
    split: Split,
    skeleton: Vec<&'a [f64]>,
    expression: Vec<&'a [f64]>,
    /// Appearance embeddings are regenerated from their provider; only its
    /// name is stored.
    appearance: &'a str,
}

/// Writes the skeleton and expression blocks of every fused frame.
pub fn write_features(path: &Path, data: &PreparedDataset, mode: AblationMode) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    for v in &data.videos {
        let feats = video_features(v, mode.mask())?;
        let rec = FeatureRecord {
            video_id: &v.video_id,
            label: &v.label,
            class: v.class,
            split: v.split,
            skeleton: feats.iter().map(|f| &f.as_slice()[..SKELETON_LEN]).collect(),
            expression: feats
                .iter()
                .map(|f| &f.as_slice()[SKELETON_LEN..SKELETON_LEN + EXPRESSION_LEN])
                .collect(),
            appearance: "zero",
        };
        serde_json::to_writer(&mut buf, &rec).expect("serializable");
        buf.push(b'\n');
    }
    write_atomic(path, &buf)?;
    Ok(())
}

/// Reads a features file back into fused frames, one vector list per video.
pub fn read_features(path: &Path) -> Result<Vec<(String, usize, Split, Vec<FrameFeature<f64>>)>, PipelineError> {
    #[derive(Deserialize)]
    struct Owned {
        video_id: String,
        class: usize,
        split: Split,
        skeleton: Vec<Vec<f64>>,
        expression: Vec<Vec<f64>>,
        appearance: String,
    }
    let mut out = Vec::new();
    for (line, text) in jsonl_lines(path)? {
        let r: Owned = serde_json::from_str(&text)
            .map_err(|e| FormatError::schema(line, e.to_string()))?;
        if r.appearance != "zero" {
            return Err(FormatError::schema(line, "only zero appearance is supported").into());
        }
        let zeros = vec![0.0; crate::fusion::APPEARANCE_LEN];
        let frames = r
            .skeleton
            .iter()
            .zip(&r.expression)
            .map(|(s, e)| FrameFeature::from_parts(s, e, &zeros))
            .collect::<Result<_, _>>()?;
        out.push((r.video_id, r.class, r.split, frames));
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    Ok(())
}

/// Stage 1 with artifacts: features, frame model, stage-1 metadata and the
/// per-video confidence sequences.
pub fn run_stage1_to_dir(
    data: &PreparedDataset,
    mode: AblationMode,
    config: &PipelineConfig,
    dir: &Path,
) -> Result<Stage1Output, PipelineError> {
    ensure_dir(dir)?;
    write_features(&dir.join(FEATURES_FILE), data, mode)?;
    let out = run_stage1(data, mode, config)?;
    Checkpoint::frame_classifier(&out.model, &out.classes).save(&dir.join(FRAME_MODEL_FILE))?;
    write_json(&dir.join(STAGE1_FILE), &out.meta())?;
    write_sequences(&dir.join(SEQUENCES_FILE), &out.sequences)?;
    Ok(out)
}

impl Stage1Output {
    pub fn meta(&self) -> Stage1Meta {
        Stage1Meta {
            mode: self.mode,
            classes: self.classes.clone(),
            summary: self.summary.clone(),
        }
    }
}

/// Stage 2 from the artifacts of [`run_stage1_to_dir`]; writes the LSTM
/// checkpoint and the report into the same directory.
pub fn resume_stage2(dir: &Path, config: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    let meta_path = dir.join(STAGE1_FILE);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| FormatError::io(&meta_path, e))?;
    let meta: Stage1Meta =
        serde_json::from_str(&text).map_err(|e| FormatError::schema(1, e.to_string()))?;
    let sequences = read_sequences(&dir.join(SEQUENCES_FILE))?;
    let (model, _, report) = run_stage2(&meta, &sequences, config)?;
    Checkpoint::lstm(&model, &meta.classes).save(&dir.join(LSTM_MODEL_FILE))?;
    write_report(dir, &report)?;
    Ok(report)
}

pub fn write_report(dir: &Path, report: &PipelineReport) -> Result<(), PipelineError> {
    write_atomic(&dir.join(REPORT_JSON), report.to_json().as_bytes())?;
    write_atomic(&dir.join(REPORT_TXT), report.to_text().as_bytes())?;
    Ok(())
}

/// Both stages for one mode over already prepared data.
pub fn run_mode(
    data: &PreparedDataset,
    mode: AblationMode,
    config: &PipelineConfig,
    dir: Option<&Path>,
) -> Result<PipelineReport, PipelineError> {
    match dir {
        Some(dir) => {
            run_stage1_to_dir(data, mode, config, dir)?;
            resume_stage2(dir, config)
        }
        None => {
            let s1 = run_stage1(data, mode, config)?;
            Ok(run_stage2(&s1.meta(), &s1.sequences, config)?.2)
        }
    }
}

/// Full pipeline for `config.ablation_mode`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    let data = prepare(config)?;
    if let Some(dir) = &config.output_dir {
        ensure_dir(dir)?;
        write_canonical_artifact(&data, &dir.join(CANONICAL_FILE))?;
    }
    run_mode(&data, config.ablation_mode, config, config.output_dir.as_deref())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub train_fraction: f64,
    pub n_train_videos: usize,
    pub n_test_videos: usize,
    /// Test video ids, identical for every row.
    pub test_videos: Vec<String>,
    pub classes: Vec<String>,
    pub rows: Vec<AblationRow>,
    /// Ablations zero channels; the input width stays the same.
    pub note: String,
}

impl AblationReport {
    pub fn row(&self, mode: AblationMode) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} train / {} test videos, seed {}",
            self.n_train_videos, self.n_test_videos, self.seed
        );
        let _ = writeln!(s, "{:<16} {:>9}", "mode", "accuracy");
        for r in &self.rows {
            let _ = writeln!(s, "{:<16} {:>9.4}", r.mode.as_str(), r.accuracy);
        }
        s
    }
}

/// Runs all four modes on one shared preparation and split.
pub fn report_ablation(config: &PipelineConfig) -> Result<AblationReport, PipelineError> {
    let data = prepare(config)?;
    if let Some(dir) = &config.output_dir {
        ensure_dir(dir)?;
        write_canonical_artifact(&data, &dir.join(CANONICAL_FILE))?;
    }
    let mut rows = Vec::new();
    for mode in AblationMode::ALL {
        let sub = config.output_dir.as_ref().map(|d| d.join(mode.as_str()));
        let r = run_mode(&data, mode, config, sub.as_deref())?;
        info!("[{mode}] test accuracy {:.4}", r.test.accuracy);
        rows.push(AblationRow {
            mode,
            accuracy: r.test.accuracy,
            per_class_accuracy: r.test.per_class_accuracy,
        });
    }
    let (n_train, n_test) = data.split_counts();
    let report = AblationReport {
        seed: config.seed,
        train_fraction: config.train_fraction,
        n_train_videos: n_train,
        n_test_videos: n_test,
        test_videos: data
            .videos
            .iter()
            .filter(|v| v.split == Split::Test)
            .map(|v| v.video_id.clone())
            .collect(),
        classes: data.classes.clone(),
        rows,
        note: "channels ablated by zeroing; all modes share one architecture, split and hyperparameters".into(),
    };
    if let Some(dir) = &config.output_dir {
        write_atomic(&dir.join(ABLATION_JSON), report.to_json().as_bytes())?;
        write_atomic(&dir.join(ABLATION_TXT), report.to_text().as_bytes())?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> PipelineConfig {
        PipelineConfig {
            seed: 3,
            synthetic: SyntheticSpec {
                n_classes: 2,
                videos_per_class: 3,
                frames_per_video: [20, 30],
                ..Default::default()
            },
            frame: FrameTrainConfig {
                epochs: 3,
                ..Default::default()
            },
            lstm: LstmTrainConfig {
                hidden_dim: 4,
                epochs: 3,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn modes_roundtrip_through_strings() {
        for m in AblationMode::ALL {
            assert_eq!(m.as_str().parse::<AblationMode>().unwrap(), m);
        }
        assert_eq!("skeleton-only".parse::<AblationMode>().unwrap(), AblationMode::SkeletonOnly);
        assert!("nope".parse::<AblationMode>().is_err());
    }

    #[test]
    fn masks_per_mode() {
        assert!(!AblationMode::Baseline.mask().skeleton && !AblationMode::Baseline.mask().expression);
        assert!(AblationMode::SkeletonOnly.mask().skeleton && !AblationMode::SkeletonOnly.mask().expression);
        assert!(!AblationMode::ExpressionOnly.mask().skeleton && AblationMode::ExpressionOnly.mask().expression);
        assert!(AblationMode::Fused.mask().skeleton && AblationMode::Fused.mask().expression);
    }

    #[test]
    fn config_toml_roundtrip_and_defaults() {
        let c = tiny_config();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        let d = PipelineConfig::from_toml("seed = 9\nablation_mode = \"baseline\"\n").unwrap();
        assert_eq!(d.seed, 9);
        assert_eq!(d.ablation_mode, AblationMode::Baseline);
        assert_eq!(d.train_fraction, 0.8);
        assert_eq!(d.lstm.batch_size, 100);
        assert_eq!(d.lstm.epochs, 100);
    }

    #[test]
    fn invalid_fraction_is_config_error() {
        let c = PipelineConfig {
            train_fraction: 1.5,
            ..tiny_config()
        };
        assert!(matches!(run_pipeline(&c), Err(PipelineError::Config(_))));
        let c = PipelineConfig {
            landmarks: Some("/nonexistent/file.jsonl".into()),
            ..tiny_config()
        };
        assert!(matches!(run_pipeline(&c), Err(PipelineError::Config(_))));
    }

    #[test]
    fn prepared_videos_have_101_aligned_frames() {
        let data = prepare(&tiny_config()).unwrap();
        assert_eq!(data.videos.len(), 6);
        assert_eq!(data.split_counts(), (4, 2));
        for v in &data.videos {
            assert_eq!(v.canonical.len(), 101);
            assert_eq!(v.expression.len(), 101);
            assert_eq!(v.appearance.len(), 101);
        }
    }

    #[test]
    fn sequences_are_probability_rows() {
        let c = tiny_config();
        let data = prepare(&c).unwrap();
        let s1 = run_stage1(&data, AblationMode::Fused, &c).unwrap();
        assert_eq!(s1.sequences.len(), 6);
        for r in &s1.sequences {
            assert_eq!(r.steps.len(), 101);
            for p in &r.steps {
                assert_eq!(p.len(), 2);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn baseline_frames_carry_no_signal() {
        let c = tiny_config();
        let data = prepare(&c).unwrap();
        let s1 = run_stage1(&data, AblationMode::Baseline, &c).unwrap();
        let first = &s1.sequences[0].steps[0];
        for r in &s1.sequences {
            for p in &r.steps {
                assert_eq!(p, first);
            }
        }
    }

    #[test]
    fn features_file_reloads() {
        let c = tiny_config();
        let data = prepare(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(FEATURES_FILE);
        write_features(&p, &data, AblationMode::SkeletonOnly).unwrap();
        let back = read_features(&p).unwrap();
        assert_eq!(back.len(), data.videos.len());
        for ((id, class, split, frames), v) in back.iter().zip(&data.videos) {
            assert_eq!((id, *class, *split), (&v.video_id, v.class, v.split));
            assert_eq!(frames, &video_features(v, AblationMode::SkeletonOnly.mask()).unwrap());
        }
    }
}
