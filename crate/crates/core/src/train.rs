//! Shared training bookkeeping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("class {0} has no training examples")]
    EmptyClass(usize),
    #[error("no training examples")]
    NoExamples,
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("training loss became non-finite at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

/// Per-epoch training loss. Entry 0 is the loss before any update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epoch_losses: Vec<f64>,
}

impl TrainingLog {
    /// Records the loss for `epoch`, failing on a non-finite value.
    pub fn push(&mut self, epoch: usize, loss: f64) -> Result<(), TrainError> {
        if !loss.is_finite() {
            return Err(TrainError::DivergenceDetected { epoch });
        }
        self.epoch_losses.push(loss);
        Ok(())
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }

    /// True if no epoch raised the loss by more than `tol` (absolute).
    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.epoch_losses.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

pub(crate) fn check_class_coverage(labels: &[usize], n_classes: usize) -> Result<(), TrainError> {
    if labels.is_empty() {
        return Err(TrainError::NoExamples);
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(TrainError::LabelOutOfRange {
                label: l,
                n_classes,
            });
        }
        counts[l] += 1;
    }
    match counts.iter().position(|&c| c == 0) {
        Some(k) => Err(TrainError::EmptyClass(k)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_rejects_nan() {
        let mut log = TrainingLog::default();
        log.push(0, 1.0).unwrap();
        assert_eq!(
            log.push(1, f64::NAN),
            Err(TrainError::DivergenceDetected { epoch: 1 })
        );
    }

    #[test]
    fn monotonicity_with_tolerance() {
        let log = TrainingLog {
            epoch_losses: vec![1.0, 0.5, 0.5005, 0.2],
        };
        assert!(!log.is_non_increasing(1e-4));
        assert!(log.is_non_increasing(1e-3));
    }

    #[test]
    fn coverage() {
        assert_eq!(check_class_coverage(&[0, 2], 3), Err(TrainError::EmptyClass(1)));
        assert!(check_class_coverage(&[0, 1, 2], 3).is_ok());
        assert!(matches!(
            check_class_coverage(&[5], 3),
            Err(TrainError::LabelOutOfRange { .. })
        ));
    }
}
