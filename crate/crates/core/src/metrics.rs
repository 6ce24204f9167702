//! Top-1 accuracy, per-class accuracy and confusion matrices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lstm::{LstmError, LstmModel, SequenceSample};
use crate::nn::argmax;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("class {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error(transparent)]
    Lstm(#[from] LstmError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `None` for classes absent from the evaluation set.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn metrics_from_predictions(
    truth: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<Metrics, EvalError> {
    assert_eq!(truth.len(), predicted.len());
    if truth.is_empty() {
        return Err(EvalError::EmptyEvalSet);
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        for label in [t, p] {
            if label >= n_classes {
                return Err(EvalError::LabelOutOfRange { label, n_classes });
            }
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..n_classes).map(|k| confusion[k][k]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[k] as f64 / n as f64)
        })
        .collect();
    Ok(Metrics {
        total: truth.len(),
        correct,
        accuracy: correct as f64 / truth.len() as f64,
        per_class_accuracy,
        confusion,
    })
}

/// Evaluates `m` on `samples` by argmax of the final-step class distribution.
pub fn evaluate<T: Real>(m: &LstmModel<T>, samples: &[SequenceSample<T>]) -> Result<Metrics, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyEvalSet);
    }
    let mut truth = Vec::with_capacity(samples.len());
    let mut pred = Vec::with_capacity(samples.len());
    for s in samples {
        truth.push(s.label);
        pred.push(argmax(&crate::lstm::lstm_forward(m, s)?));
    }
    metrics_from_predictions(&truth, &pred, m.input_dim())
}
