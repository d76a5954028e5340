//! Raw ink in, ranked labels out. Shared by the command line, the HTTP
//! service and the Python bindings.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{checkpoint_hash, Checkpoint, CheckpointError};
use crate::eightdir::EightDirConfig;
use crate::features::{FeatureError, Featurizer};
use crate::ink::InkCharacter;
use crate::nn::NnError;
use crate::stroke_maps::{DEFAULT_MAP_SIZE, DEFAULT_STACK_DEPTH};
use crate::train::predict_features;

#[derive(Debug, Error)]
pub enum RecognizeError {
    #[error("ink has no strokes")]
    EmptyInk,
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    pub class_id: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub preprocess_ms: f64,
    pub forward_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recognition {
    pub candidates: Vec<Candidate>,
    pub timings: Timings,
}

/// Visualization views: the per-stroke map stack and the direction vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMaps {
    pub depth: usize,
    pub size: usize,
    /// `depth` maps of `size * size` cells, row-major.
    pub stack: Vec<Vec<u8>>,
    pub dir: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub variant: String,
    pub class_count: usize,
    pub alphabet_size: usize,
    pub checkpoint_hash: String,
}

#[derive(Debug, Clone)]
pub struct Recognizer {
    checkpoint: Checkpoint,
    hash: String,
    views: Featurizer,
}

impl Recognizer {
    pub fn from_checkpoint(checkpoint: Checkpoint) -> Self {
        let bytes = checkpoint.to_bytes();
        Self::with_hash(checkpoint, checkpoint_hash(&bytes))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        Ok(Self::with_hash(Checkpoint::from_bytes(bytes)?, checkpoint_hash(bytes)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    fn with_hash(checkpoint: Checkpoint, hash: String) -> Self {
        let mut views = checkpoint.featurizer.clone();
        if !checkpoint.model.kind().uses_stack() {
            views.stack_depth = DEFAULT_STACK_DEPTH;
            views.map_size = DEFAULT_MAP_SIZE.max(views.map_size);
        }
        if !checkpoint.model.kind().uses_dir() {
            views.eightdir = EightDirConfig::default();
        }
        Recognizer {
            checkpoint,
            hash,
            views,
        }
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn info(&self) -> ModelInfo {
        ModelInfo {
            variant: self.checkpoint.model.kind().to_string(),
            class_count: self.checkpoint.model.classes(),
            alphabet_size: self.checkpoint.alphabet.len(),
            checkpoint_hash: self.hash.clone(),
        }
    }

    /// Top `k` candidates (fewer when the model has fewer classes).
    pub fn recognize(&self, ink: &InkCharacter, k: usize) -> Result<Recognition, RecognizeError> {
        if ink.strokes.is_empty() {
            return Err(RecognizeError::EmptyInk);
        }
        if k == 0 {
            return Err(RecognizeError::ZeroK);
        }
        let t0 = Instant::now();
        let features = self.checkpoint.featurizer.featurize(ink)?;
        let t1 = Instant::now();
        let pred = predict_features(&self.checkpoint.model, &features)?;
        let t2 = Instant::now();
        let candidates = pred
            .top_k(k)
            .iter()
            .map(|&(class_id, probability)| Candidate {
                label: self
                    .checkpoint
                    .alphabet
                    .name(class_id)
                    .map(str::to_string)
                    .unwrap_or_else(|| class_id.to_string()),
                class_id,
                probability,
            })
            .collect();
        Ok(Recognition {
            candidates,
            timings: Timings {
                preprocess_ms: (t1 - t0).as_secs_f64() * 1e3,
                forward_ms: (t2 - t1).as_secs_f64() * 1e3,
            },
        })
    }

    pub fn feature_maps(&self, ink: &InkCharacter) -> Result<FeatureMaps, RecognizeError> {
        if ink.strokes.is_empty() {
            return Err(RecognizeError::EmptyInk);
        }
        let v = self.views.all_views(ink)?;
        let stack = v.stack.expect("all views");
        Ok(FeatureMaps {
            depth: stack.depth(),
            size: stack.size(),
            stack: (0..stack.depth()).map(|i| stack.map(i).cells().to_vec()).collect(),
            dir: v.dir.expect("all views").values,
        })
    }
}
