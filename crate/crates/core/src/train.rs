//! Two-phase mini-batch training with AdaGrad.
//!
//! Phase I updates every parameter. The squared-gradient history is then
//! cleared and Phase II updates only the parameters after the convolutional
//! branch.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{evaluate_predictions, Prediction};
use crate::features::{FeatureError, Featurizer, SampleFeatures};
use crate::ink::InkCharacter;
use crate::model::{Model, ModelInput};
use crate::nn::{softmax_nll_grad, GradState, NnError, DEFAULT_ETA, DEFAULT_FUDGE};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub eta: f64,
    pub fudge: f64,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    /// Stop a phase after this many validation evaluations without a new
    /// best P@1. `None` runs the full epoch budget.
    pub patience: Option<usize>,
    /// Shuffling and augmentation seed.
    pub seed: u64,
    /// Per-batch point-drop probability.
    pub drop_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            eta: DEFAULT_ETA,
            fudge: DEFAULT_FUDGE,
            phase1_epochs: 20,
            phase2_epochs: 10,
            patience: None,
            seed: 0,
            drop_prob: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("sample {0} has no label")]
    UnlabeledSample(usize),
    #[error("sample {index}: label {label} outside {classes} classes")]
    LabelOutOfRange { index: usize, label: usize, classes: usize },
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Samples with their base (unaugmented) features.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub inks: Vec<InkCharacter>,
    pub labels: Vec<usize>,
    pub features: Vec<SampleFeatures>,
}

impl LabeledSet {
    pub fn build(inks: &[InkCharacter], featurizer: &Featurizer) -> Result<Self, TrainError> {
        Self::with_features(inks, inks.iter().map(|i| featurizer.featurize(i)).collect::<Result<_, _>>()?)
    }

    /// Pairs inks with already computed features.
    pub fn with_features(inks: &[InkCharacter], features: Vec<SampleFeatures>) -> Result<Self, TrainError> {
        let labels = inks
            .iter()
            .enumerate()
            .map(|(i, s)| s.label.ok_or(TrainError::UnlabeledSample(i)))
            .collect::<Result<_, _>>()?;
        Ok(LabeledSet {
            inks: inks.to_vec(),
            labels,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub phase: u8,
    pub batch: usize,
    /// Summed loss over the batch.
    pub loss: f64,
    /// Validation P@1, recorded on the last batch of an epoch.
    pub val_p1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<TraceRow>,
    /// Epochs actually run per phase.
    pub epochs: [usize; 2],
    /// Summed training loss of each epoch, per phase.
    pub epoch_loss: [Vec<f64>; 2],
    /// θ1 digest at the end of Phase I and after Phase II.
    pub theta1_after_phase1: String,
    pub theta1_after_phase2: String,
    /// Largest absolute θ2 change made by the first update of each phase.
    pub first_step_delta: [Option<f64>; 2],
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,phase,batch,loss,val_p1\n");
        for r in &self.trace {
            let val = r.val_p1.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.phase, r.batch, r.loss, val);
        }
        out
    }

    pub fn final_epoch_loss(&self) -> Option<f64> {
        self.epoch_loss[1].last().or(self.epoch_loss[0].last()).copied()
    }
}

/// SHA-256 over the little-endian bytes of the first `n` parameter tensors.
pub fn params_digest(model: &Model<f32>, n: usize) -> String {
    let mut h = Sha256::new();
    for p in model.params().into_iter().take(n) {
        for v in p.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn inputs<'a>(image: &'a Option<Vec<f32>>, dir: &'a Option<Vec<f32>>) -> ModelInput<'a, f32> {
    ModelInput {
        image: image.as_deref(),
        dir: dir.as_deref(),
    }
}

pub fn predict_features(model: &Model<f32>, f: &SampleFeatures) -> Result<Prediction, NnError> {
    let (image, dir) = (f.image_hwc(), f.dir_values());
    model.predict(inputs(&image, &dir))
}

fn val_p1(model: &Model<f32>, set: &LabeledSet) -> Result<f64, NnError> {
    let preds = set
        .features
        .iter()
        .map(|f| predict_features(model, f))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<_> = set.labels.iter().map(|&l| Some(l)).collect();
    Ok(evaluate_predictions(&preds, &labels, &[1]).map(|r| r.precision[&1]).unwrap_or(0.0))
}

fn mix(seed: u64, phase: u64, epoch: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    for v in [seed, phase, epoch, index] {
        h.update(v.to_le_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Runs both phases in place on `model`. The model from the last completed
/// epoch is kept.
pub fn train_two_phase(
    model: &mut Model<f32>,
    featurizer: &Featurizer,
    train: &LabeledSet,
    validation: Option<&LabeledSet>,
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::ZeroBatch);
    }
    let classes = model.classes();
    if let Some((index, &label)) = train.labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(TrainError::LabelOutOfRange { index, label, classes });
    }
    let mut aug = featurizer.clone();
    aug.preprocess.drop_prob = cfg.drop_prob;
    let augment = cfg.drop_prob > 0.0;

    let n1 = model.theta1_len();
    let mut state = {
        let params = model.params();
        let slices: Vec<&[f32]> = params.iter().map(|p| p.data()).collect();
        GradState::new(&slices, cfg.eta, cfg.fudge)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport {
        trace: Vec::new(),
        epochs: [0, 0],
        epoch_loss: [Vec::new(), Vec::new()],
        theta1_after_phase1: String::new(),
        theta1_after_phase2: String::new(),
        first_step_delta: [None, None],
    };
    let mut epoch_counter = 0;

    for phase in [1u8, 2] {
        let budget = if phase == 1 { cfg.phase1_epochs } else { cfg.phase2_epochs };
        let theta1 = phase == 1;
        if phase == 2 {
            state.reset();
        }
        // Frozen branch outputs are reused when inputs never change.
        let mut encoded: Vec<Option<Vec<f32>>> = vec![None; train.len()];
        let cache_encoded = !theta1 && !augment && n1 > 0;
        let (mut best, mut stale) = (f64::NEG_INFINITY, 0usize);
        let mut first_step = true;
        for epoch in 0..budget {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
            for (b, batch) in batches.into_iter().enumerate() {
                let mut grads = model.zero_grads();
                let mut loss = 0.0f64;
                for &i in batch {
                    let f = if augment {
                        aug.featurize_augmented(&train.inks[i], mix(cfg.seed, phase as u64, epoch as u64, i as u64))?
                    } else {
                        train.features[i].clone()
                    };
                    let (image, dir) = (f.image_hwc::<f32>(), f.dir_values::<f32>());
                    let enc = if cache_encoded {
                        if encoded[i].is_none() {
                            encoded[i] = Some(model.encode(image.as_deref().unwrap_or(&[]))?);
                        }
                        encoded[i].clone()
                    } else {
                        None
                    };
                    let trace = model.forward_trace(inputs(&image, &dir), enc)?;
                    let (l, g) = softmax_nll_grad(trace.scores(), train.labels[i])?;
                    loss += l as f64;
                    model.backward(&trace, &g, &mut grads, theta1);
                }
                let before: Option<Vec<Vec<f32>>> =
                    first_step.then(|| model.params()[n1..].iter().map(|p| p.data().to_vec()).collect());
                {
                    let skip = if theta1 { 0 } else { n1 };
                    let mut params = model.params_mut();
                    for (idx, (p, g)) in params.iter_mut().zip(&grads).enumerate().skip(skip) {
                        state.step_one(idx, p.data_mut(), g)?;
                    }
                }
                if let Some(before) = before {
                    let delta = model.params()[n1..]
                        .iter()
                        .zip(&before)
                        .flat_map(|(p, b)| p.data().iter().zip(b).map(|(x, y)| (x - y).abs() as f64))
                        .fold(0.0, f64::max);
                    report.first_step_delta[phase as usize - 1] = Some(delta);
                    first_step = false;
                }
                epoch_loss += loss;
                report.trace.push(TraceRow {
                    epoch: epoch_counter,
                    phase,
                    batch: b,
                    loss,
                    val_p1: None,
                });
            }
            report.epoch_loss[phase as usize - 1].push(epoch_loss);
            report.epochs[phase as usize - 1] += 1;
            epoch_counter += 1;
            if let Some(val) = validation.filter(|v| !v.is_empty()) {
                let p1 = val_p1(model, val)?;
                if let Some(last) = report.trace.last_mut() {
                    last.val_p1 = Some(p1);
                }
                if p1 > best {
                    best = p1;
                    stale = 0;
                } else {
                    stale += 1;
                }
                if cfg.patience.is_some_and(|p| stale >= p) {
                    break;
                }
            }
        }
        if phase == 1 {
            report.theta1_after_phase1 = params_digest(model, n1);
        } else {
            report.theta1_after_phase2 = params_digest(model, n1);
        }
    }
    Ok(report)
}
