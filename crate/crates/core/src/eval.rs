//! Ranked predictions and top-k precision.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, Featurizer};
use crate::ink::InkCharacter;
use crate::model::Model;
use crate::nn::{softmax, NnError, Scalar};

/// Classes ranked by descending probability; equal probabilities keep
/// ascending class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub ranked: Vec<(usize, f64)>,
}

impl Prediction {
    pub fn from_scores<T: Scalar>(scores: &[T]) -> Result<Self, NnError> {
        let probs = softmax(scores)?;
        Ok(Self::from_probabilities(probs.into_iter().map(Scalar::to_f64)))
    }

    pub fn from_probabilities(probs: impl IntoIterator<Item = f64>) -> Self {
        let mut ranked: Vec<(usize, f64)> = probs.into_iter().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Prediction { ranked }
    }

    pub fn top1(&self) -> Option<usize> {
        self.ranked.first().map(|c| c.0)
    }

    pub fn top_k(&self, k: usize) -> &[(usize, f64)] {
        &self.ranked[..k.min(self.ranked.len())]
    }

    /// Rank (0-based) of `class`, if present.
    pub fn rank_of(&self, class: usize) -> Option<usize> {
        self.ranked.iter().position(|c| c.0 == class)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("sample {0} has no label")]
    UnlabeledSample(usize),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    /// `k -> N_C(k)`
    pub correct: BTreeMap<usize, usize>,
    /// `k -> N_C(k) / N_T`
    pub precision: BTreeMap<usize, f64>,
}

impl EvalReport {
    pub fn p_at(&self, k: usize) -> Option<f64> {
        self.precision.get(&k).copied()
    }

    /// Plain-text table, one `P@k` row per requested k.
    pub fn table(&self) -> String {
        let mut out = format!("{:<6} {:>8} {:>8}\n", "k", "correct", "P@k");
        for (k, p) in &self.precision {
            out.push_str(&format!("P@{:<4} {:>8} {:>8.4}\n", k, self.correct[k], p));
        }
        out.push_str(&format!("samples {}\n", self.total));
        out
    }
}

/// Counts a sample correct at `k` when its label is among the first `k`
/// ranked classes.
pub fn evaluate_predictions(
    predictions: &[Prediction],
    labels: &[Option<usize>],
    ks: &[usize],
) -> Result<EvalReport, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if ks.contains(&0) {
        return Err(EvalError::ZeroK);
    }
    let mut ranks = Vec::with_capacity(labels.len());
    for (i, (p, l)) in predictions.iter().zip(labels).enumerate() {
        let label = l.ok_or(EvalError::UnlabeledSample(i))?;
        ranks.push(p.rank_of(label));
    }
    let total = ranks.len();
    let mut correct = BTreeMap::new();
    let mut precision = BTreeMap::new();
    for &k in ks {
        let n = ranks.iter().filter(|r| r.is_some_and(|r| r < k)).count();
        correct.insert(k, n);
        precision.insert(k, if total == 0 { 0.0 } else { n as f64 / total as f64 });
    }
    Ok(EvalReport {
        total,
        correct,
        precision,
    })
}

/// Featurizes and ranks every sample, then scores P@k for each `k`.
pub fn evaluate(
    model: &Model<f32>,
    featurizer: &Featurizer,
    samples: &[InkCharacter],
    ks: &[usize],
) -> Result<(EvalReport, Vec<Prediction>), EvalError> {
    if let Some(i) = samples.iter().position(|s| s.label.is_none()) {
        return Err(EvalError::UnlabeledSample(i));
    }
    let preds = samples
        .iter()
        .map(|s| {
            let f = featurizer.featurize(s)?;
            Ok(crate::train::predict_features(model, &f)?)
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let labels: Vec<_> = samples.iter().map(|s| s.label).collect();
    Ok((evaluate_predictions(&preds, &labels, ks)?, preds))
}
