//! Trains a variant on synthetic characters and prints P@k.
//!
//! `cargo run --release --example train_synth -- ssdcnn8`

use ssdcnn::preprocess::PreprocessConfig;
use ssdcnn::synth::synth_dataset;
use ssdcnn::{build_model, evaluate, train_two_phase, Featurizer, LabeledSet, TrainConfig, VariantKind};

fn main() {
    let kind: VariantKind = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "nn8".into())
        .parse()
        .expect("variant: imdcnn, ssdcnn8, nn8 or ssdcnn");
    let (train, test) = synth_dataset(10, 100, 20, 42);
    let fz = Featurizer::new(kind, PreprocessConfig::default());
    let set = LabeledSet::build(&train.samples, &fz).unwrap();
    let mut model = build_model(kind, 10, 42).unwrap();
    let cfg = TrainConfig {
        phase1_epochs: 5,
        phase2_epochs: 3,
        ..TrainConfig::default()
    };
    let report = train_two_phase(&mut model, &fz, &set, None, &cfg).unwrap();
    println!("final epoch loss {:.4}", report.final_epoch_loss().unwrap());
    let (eval, _) = evaluate(&model, &fz, &test.samples, &[1, 2, 3]).unwrap();
    print!("{}", eval.table());
}
