mod common;

use common::*;
use ssdcnn::checkpoint::Checkpoint;
use ssdcnn::eval::evaluate;
use ssdcnn::features::{featurize_dataset, FeatureCache, Featurizer};
use ssdcnn::ink::LabelAlphabet;
use ssdcnn::model::{build_model, Model, ModelInput, VariantKind};
use ssdcnn::preprocess::PreprocessConfig;
use ssdcnn::synth::{confusable_pairs, synth_dataset, template_ink};
use ssdcnn::train::{params_digest, predict_features, train_two_phase, LabeledSet, TrainConfig, TrainError};

fn toy_set(kind: VariantKind, n: usize) -> (Model<f32>, Featurizer, LabeledSet) {
    let arch = toy_architecture(kind);
    let fz = Featurizer::for_architecture(&arch, PreprocessConfig::default()).unwrap();
    let (train, _) = synth_dataset(5, n.div_ceil(5), 0, 3);
    let set = LabeledSet::build(&train.samples[..n], &fz).unwrap();
    (Model::new(arch, 1).unwrap(), fz, set)
}

fn cfg(p1: usize, p2: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        phase1_epochs: p1,
        phase2_epochs: p2,
        seed: 9,
        ..TrainConfig::default()
    }
}

#[test]
fn phase_two_freezes_conv_branch_and_restarts_history() {
    let (mut model, fz, set) = toy_set(VariantKind::Ssdcnn, 20);
    let before = params_digest(&model, model.theta1_len());
    let report = train_two_phase(&mut model, &fz, &set, None, &cfg(3, 3)).unwrap();
    assert_ne!(report.theta1_after_phase1, before);
    assert_eq!(report.theta1_after_phase1, report.theta1_after_phase2);
    assert_eq!(report.theta1_after_phase2, params_digest(&model, model.theta1_len()));
    // fresh accumulators make the first step of each phase about eta in size
    for d in report.first_step_delta {
        assert!((d.unwrap() - 0.01).abs() < 1e-5, "{d:?}");
    }
    assert_eq!(report.epochs, [3, 3]);
}

#[test]
fn fixed_seed_reproduces_trace() {
    for drop_prob in [0.0, 0.3] {
        let run = || {
            let (mut model, fz, set) = toy_set(VariantKind::Ssdcnn8, 15);
            let c = TrainConfig { drop_prob, ..cfg(2, 2) };
            let r = train_two_phase(&mut model, &fz, &set, Some(&set), &c).unwrap();
            (r.to_csv(), model)
        };
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        assert!(a.starts_with("epoch,phase,batch,loss,val_p1\n"));
        assert_eq!(a.lines().count(), 1 + 4 * 4);
    }
}

#[test]
fn patience_stops_a_phase_early() {
    let (mut model, fz, set) = toy_set(VariantKind::Nn8, 10);
    let c = TrainConfig {
        patience: Some(1),
        ..cfg(50, 50)
    };
    let r = train_two_phase(&mut model, &fz, &set, Some(&set), &c).unwrap();
    assert!(r.epochs[0] < 50 && r.epochs[1] < 50, "{:?}", r.epochs);
}

#[test]
fn empty_training_set_is_rejected() {
    let (mut model, fz, mut set) = toy_set(VariantKind::Nn8, 5);
    set.inks.clear();
    set.labels.clear();
    set.features.clear();
    let r = train_two_phase(&mut model, &fz, &set, None, &cfg(1, 1));
    assert!(matches!(r, Err(TrainError::EmptyDataset)));
}

#[test]
fn checkpoint_reload_gives_identical_probabilities() {
    let (mut model, fz, set) = toy_set(VariantKind::Ssdcnn, 10);
    train_two_phase(&mut model, &fz, &set, None, &cfg(1, 1)).unwrap();
    let alphabet = LabelAlphabet::new((0..5).map(|i| format!("c{i}"))).unwrap();
    let ck = Checkpoint::new(model, alphabet, fz);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ssdc");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes());
    for f in &set.features {
        assert_eq!(
            predict_features(&ck.model, f).unwrap(),
            predict_features(&back.model, f).unwrap()
        );
    }
}

#[test]
fn feature_cache_hit_is_bit_identical() {
    let (train, _) = synth_dataset(4, 3, 0, 5);
    for kind in VariantKind::ALL {
        let fz = Featurizer::new(kind, PreprocessConfig::default());
        let a = featurize_dataset(&train, &fz).unwrap();
        let b = FeatureCache::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(a, b);
        let has = |pick: fn(&ssdcnn::SampleFeatures) -> bool| a.features.iter().all(pick);
        assert_eq!(has(|f| f.dir.is_some()), kind.uses_dir());
        assert_eq!(has(|f| f.stack.is_some()), kind.uses_stack());
    }
}

#[test]
fn static_image_model_cannot_tell_stroke_order() {
    let model = build_model(VariantKind::Imdcnn, 10, 4).unwrap();
    let fz = Featurizer::for_architecture(model.architecture(), PreprocessConfig::default()).unwrap();
    for (a, b) in confusable_pairs() {
        let fa = fz.featurize(&template_ink(a)).unwrap();
        let fb = fz.featurize(&template_ink(b)).unwrap();
        assert_eq!(fa.image, fb.image);
        let out = |f: &ssdcnn::SampleFeatures| {
            let img = f.image_hwc::<f32>().unwrap();
            model.forward(ModelInput { image: Some(&img), dir: None }).unwrap()
        };
        assert_eq!(out(&fa), out(&fb));
    }
}

#[test]
fn evaluate_reports_full_ranking_as_certain() {
    let (train, _) = synth_dataset(5, 2, 0, 8);
    let model = build_model(VariantKind::Nn8, 5, 2).unwrap();
    let fz = Featurizer::new(VariantKind::Nn8, PreprocessConfig::default());
    let (report, preds) = evaluate(&model, &fz, &train.samples, &[1, 3, 5]).unwrap();
    assert_eq!(report.p_at(5), Some(1.0));
    assert_eq!(preds.len(), 10);
    assert!(report.p_at(1) <= report.p_at(3));
    let mut unlabeled = train.samples.clone();
    unlabeled[3].label = None;
    assert!(evaluate(&model, &fz, &unlabeled, &[1]).is_err());
}
