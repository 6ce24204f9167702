//! Self-describing JSON model checkpoints.
//!
//! Parameters are written as decimal floats in shortest round-trip form, so a
//! save/load cycle reproduces every `f64` bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{write_atomic, FormatError};
use crate::fusion::FrameClassifier;
use crate::lstm::LstmModel;
use crate::scalar::Real;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("checkpoint is not valid JSON: {0}")]
    Parse(String),
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("expected a {expected} checkpoint, found {found}")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("parameter shapes inconsistent: {0}")]
    Shape(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameClassifierParams {
    pub input_dim: usize,
    pub n_classes: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub gate_weights: Vec<f64>,
    pub gate_bias: Vec<f64>,
    pub readout_weights: Vec<f64>,
    pub readout_bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    FrameClassifier(FrameClassifierParams),
    Lstm(LstmParams),
}

impl ModelParams {
    fn kind(&self) -> &'static str {
        match self {
            ModelParams::FrameClassifier(_) => "frame_classifier",
            ModelParams::Lstm(_) => "lstm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Class names indexed by class id; may be empty.
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(flatten)]
    pub model: ModelParams,
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

fn from_f64<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

impl Checkpoint {
    pub fn frame_classifier<T: Real>(m: &FrameClassifier<T>, class_names: &[String]) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            class_names: class_names.to_vec(),
            model: ModelParams::FrameClassifier(FrameClassifierParams {
                input_dim: m.input_dim(),
                n_classes: m.n_classes(),
                weights: to_f64(&m.weights),
                bias: to_f64(&m.bias),
            }),
        }
    }

    pub fn lstm<T: Real>(m: &LstmModel<T>, class_names: &[String]) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            class_names: class_names.to_vec(),
            model: ModelParams::Lstm(LstmParams {
                input_dim: m.input_dim(),
                hidden_dim: m.hidden_dim(),
                gate_weights: to_f64(&m.gate_weights),
                gate_bias: to_f64(&m.gate_bias),
                readout_weights: to_f64(&m.readout_weights),
                readout_bias: to_f64(&m.readout_bias),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| CheckpointError::Parse(e.to_string()))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(ck.format_version));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        write_atomic(path, self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn into_frame_classifier<T: Real>(self) -> Result<FrameClassifier<T>, CheckpointError> {
        match self.model {
            ModelParams::FrameClassifier(p) => FrameClassifier::from_parts(
                p.input_dim,
                p.n_classes,
                from_f64(&p.weights),
                from_f64(&p.bias),
            )
            .map_err(|e| CheckpointError::Shape(e.to_string())),
            other => Err(CheckpointError::WrongKind {
                expected: "frame_classifier",
                found: other.kind(),
            }),
        }
    }

    pub fn into_lstm<T: Real>(self) -> Result<LstmModel<T>, CheckpointError> {
        match self.model {
            ModelParams::Lstm(p) => LstmModel::from_parts(
                p.input_dim,
                p.hidden_dim,
                from_f64(&p.gate_weights),
                from_f64(&p.gate_bias),
                from_f64(&p.readout_weights),
                from_f64(&p.readout_bias),
            )
            .map_err(|e| CheckpointError::Shape(e.to_string())),
            other => Err(CheckpointError::WrongKind {
                expected: "lstm",
                found: other.kind(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn lstm_roundtrip_is_bit_exact(seed in any::<u64>(), scale in 1e-6f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = LstmModel::<f64>::random(3, 2, scale, &mut rng);
            let back = Checkpoint::from_json(&Checkpoint::lstm(&m, &[]).to_json())
                .unwrap()
                .into_lstm::<f64>()
                .unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn frame_classifier_roundtrip_with_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = FrameClassifier::<f64>::random(5, 2, 0.1, &mut rng);
        let names = vec!["a".to_string(), "b".to_string()];
        let ck = Checkpoint::frame_classifier(&m, &names);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back.class_names, names);
        assert_eq!(back.into_frame_classifier::<f64>().unwrap(), m);
    }

    #[test]
    fn kind_and_version_are_checked() {
        let m = LstmModel::<f64>::zeros(2, 2);
        let json = Checkpoint::lstm(&m, &[]).to_json();
        assert!(json.contains("\"kind\":\"lstm\""));
        assert!(json.contains("\"format_version\":1"));
        assert!(matches!(
            Checkpoint::from_json(&json).unwrap().into_frame_classifier::<f64>(),
            Err(CheckpointError::WrongKind { .. })
        ));
        let v2 = json.replace("\"format_version\":1", "\"format_version\":2");
        assert!(matches!(
            Checkpoint::from_json(&v2),
            Err(CheckpointError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn truncated_parameters_rejected() {
        let m = FrameClassifier::<f64>::zeros(3, 2);
        let mut ck = Checkpoint::frame_classifier(&m, &[]);
        if let ModelParams::FrameClassifier(p) = &mut ck.model {
            p.weights.pop();
        }
        assert!(matches!(
            ck.into_frame_classifier::<f64>(),
            Err(CheckpointError::Shape(_))
        ));
    }
}
