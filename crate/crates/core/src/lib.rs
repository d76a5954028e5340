//! Online handwritten character recognition from stroke-sequence maps.
//!
//! Raw ink is normalized and interpolated ([`preprocess`]), rasterized into a
//! per-stroke map stack ([`stroke_maps`]) and summarized as eight-direction
//! features ([`eightdir`]). [`model`] wires the recognizer variants out of
//! [`nn`] layers described by [`netspec`] strings, and [`train`] fits them.

pub mod checkpoint;
pub mod eightdir;
pub mod eval;
pub mod features;
pub mod ink;
pub mod model;
pub mod netspec;
pub mod nn;
pub mod pot;
pub mod preprocess;
pub mod recognizer;
pub mod stroke_maps;
pub mod synth;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use eval::{evaluate, evaluate_predictions, EvalReport, Prediction};
pub use features::{featurize_dataset, Featurizer, SampleFeatures};
pub use ink::{Dataset, InkCharacter, LabelAlphabet, Point, Stroke};
pub use model::{build_model, Architecture, Model, ModelInput, VariantKind};
pub use recognizer::{Candidate, Recognizer};
pub use train::{train_two_phase, LabeledSet, TrainConfig, TrainReport};
