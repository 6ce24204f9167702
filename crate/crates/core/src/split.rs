//! Video manifests and stratified train/test splitting.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{write_atomic, FormatError};

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("class {class:?} has {count} videos; at least 2 are needed")]
    ClassTooSmall { class: String, count: usize },
    #[error("train fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub label: String,
    pub class: usize,
}

/// Class names (indexed by class id) and the videos that use them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub classes: Vec<String>,
    pub videos: Vec<ManifestEntry>,
}

impl Manifest {
    /// Builds a manifest from `(video_id, label)` pairs. Class ids follow the
    /// sorted order of the distinct labels.
    pub fn from_labels<'a>(items: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let items: Vec<(&str, &str)> = items.into_iter().collect();
        let mut classes: Vec<String> = items.iter().map(|(_, l)| l.to_string()).collect();
        classes.sort();
        classes.dedup();
        let videos = items
            .iter()
            .map(|(id, l)| ManifestEntry {
                video_id: id.to_string(),
                label: l.to_string(),
                class: classes.binary_search_by(|c| c.as_str().cmp(l)).expect("present"),
            })
            .collect();
        Self { classes, videos }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn load(path: &Path) -> Result<Self, SplitError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| SplitError::Manifest(e.to_string()))?;
        for v in &m.videos {
            if m.classes.get(v.class) != Some(&v.label) {
                return Err(SplitError::Manifest(format!(
                    "video {:?} has class {} but label {:?}",
                    v.video_id, v.class, v.label
                )));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), SplitError> {
        let text = serde_json::to_string_pretty(self).expect("serializable");
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

/// Number of training items for a class with `count` videos: the rounded
/// fraction, clamped so both sides keep at least one video.
pub fn train_count(count: usize, train_fraction: f64) -> usize {
    let t = (train_fraction * count as f64).round() as usize;
    t.clamp(1, count - 1)
}

/// Stratified split. Within each class the videos are shuffled by a generator
/// seeded with `seed` (classes visited in id order); output order follows the
/// input manifest.
pub fn split_dataset(
    manifest: &Manifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(Manifest, Manifest), SplitError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SplitError::InvalidFraction(train_fraction));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, v) in manifest.videos.iter().enumerate() {
        by_class.entry(v.class).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_train = vec![false; manifest.videos.len()];
    for (class, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(SplitError::ClassTooSmall {
                class: manifest
                    .classes
                    .get(class)
                    .cloned()
                    .unwrap_or_else(|| class.to_string()),
                count: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        for &i in &idx[..train_count(idx.len(), train_fraction)] {
            is_train[i] = true;
        }
    }
    let pick = |want: bool| Manifest {
        classes: manifest.classes.clone(),
        videos: manifest
            .videos
            .iter()
            .zip(&is_train)
            .filter(|(_, &t)| t == want)
            .map(|(v, _)| v.clone())
            .collect(),
    };
    Ok((pick(true), pick(false)))
}
