mod common;

use htdetect_core::corpus::split_dataset;
use htdetect_core::models::{CheckpointStore, CnnSpec, LstmSpec, ModelSpec, ModelVariant};
use htdetect_core::trainer::{
    accuracy, build_model, cross_entropy, default_config, fit, train, LabeledInput, RunManifest, TrainError,
};
use proptest::prelude::*;

use common::*;

fn cnn_spec() -> ModelSpec {
    ModelSpec::cnn(CnnSpec {
        filters: 16,
        embedding: small_embedding(),
        ..Default::default()
    })
}

fn lstm_spec() -> ModelSpec {
    ModelSpec::lstm(LstmSpec {
        hidden_units: 16,
        max_len: None,
        embedding: small_embedding(),
    })
}

#[test]
fn single_epoch_gives_single_record() {
    let corpus = separable_corpus(10, 0);
    let split = split_dataset(&corpus, [0.6, 0.2, 0.2], 1, true).unwrap();
    let tmp = std::env::temp_dir();
    let mut m = build_model(&cnn_spec(), &split.train, &CheckpointStore::new(&tmp), &tmp, 1).unwrap();
    let mut cfg = default_config(ModelVariant::Cnn);
    cfg.epochs = 1;
    let h = train(&mut m, &split, &cfg).unwrap();
    assert_eq!(h.len(), 1);
    assert!(h.epochs[0].val_loss.is_some());
    let manifest = RunManifest::new(&m, &split, &cfg, None);
    assert_eq!(manifest.train.epochs, 1);
    assert_eq!(manifest.inputs_hash().len(), 64);
}

#[test]
fn same_seed_same_losses() {
    let corpus = separable_corpus(10, 5);
    let tmp = std::env::temp_dir();
    let store = CheckpointStore::new(&tmp);
    for spec in [cnn_spec(), lstm_spec()] {
        let run = || {
            let mut m = build_model(&spec, &corpus, &store, &tmp, 9).unwrap();
            let data = LabeledInput::from_records(&m, &corpus).unwrap();
            let mut cfg = default_config(spec.variant());
            cfg.epochs = 5;
            cfg.batch_size = 8;
            fit(&mut m, &data, None, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.epochs.iter().zip(&b.epochs) {
            assert!((x.train_loss - y.train_loss).abs() < 1e-6);
        }
    }
}

#[test]
fn word_models_overfit_small_separable_corpus() {
    let corpus = separable_corpus(10, 3);
    let tmp = std::env::temp_dir();
    let store = CheckpointStore::new(&tmp);
    for spec in default_specs().into_iter().take(2) {
        let mut m = build_model(&spec, &corpus, &store, &tmp, 4).unwrap();
        let data = LabeledInput::from_records(&m, &corpus).unwrap();
        let h = fit(&mut m, &data, None, &default_config(spec.variant())).unwrap();
        assert_eq!(h.len(), 100);
        assert!(h.epochs[99].train_loss < h.epochs[0].train_loss);
        let acc = accuracy(&m, &data, 32).unwrap();
        assert!(acc >= 0.95, "{}: accuracy {acc}", spec.display_name());
    }
}

#[test]
fn exploding_updates_are_detected_and_rolled_back() {
    let corpus = separable_corpus(4, 0);
    let tmp = std::env::temp_dir();
    let mut m = build_model(&cnn_spec(), &corpus, &CheckpointStore::new(&tmp), &tmp, 0).unwrap();
    let data = LabeledInput::from_records(&m, &corpus).unwrap();
    let mut cfg = default_config(ModelVariant::Cnn);
    cfg.learning_rate = 1e38;
    cfg.epochs = 10;
    match fit(&mut m, &data, None, &cfg) {
        Err(TrainError::DivergenceDetected { epoch, restored_epoch, .. }) => {
            assert!(restored_epoch < epoch);
            let p = m.predict_input(&data.input, 32).unwrap();
            assert!(p.probabilities.iter().flatten().all(|x| x.is_finite()));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let corpus = separable_corpus(2, 0);
    let tmp = std::env::temp_dir();
    let mut m = build_model(&cnn_spec(), &corpus, &CheckpointStore::new(&tmp), &tmp, 0).unwrap();
    let data = LabeledInput::from_records(&m, &corpus).unwrap();
    let mut cfg = default_config(ModelVariant::Cnn);
    cfg.batch_size = 0;
    assert!(matches!(fit(&mut m, &data, None, &cfg), Err(TrainError::InvalidConfig(_))));
}

fn brute_force_ce(probs: &[[f64; 3]], targets: &[[f64; 3]]) -> f64 {
    let mut total = 0.0;
    for i in 0..probs.len() {
        let mut row = 0.0;
        for c in 0..3 {
            let mut p = probs[i][c];
            if p < 1e-7 {
                p = 1e-7;
            }
            if p > 1.0 - 1e-7 {
                p = 1.0 - 1e-7;
            }
            row -= targets[i][c] * p.ln();
        }
        total += row;
    }
    total / probs.len() as f64
}

fn simplex_rows() -> impl Strategy<Value = Vec<([f64; 3], usize)>> {
    prop::collection::vec(((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 0usize..3), 1..50).prop_map(|rows| {
        rows.into_iter()
            .map(|((a, b, c), y)| {
                let s = a + b + c + 1e-12;
                ([a / s, b / s, c / s], y)
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn cross_entropy_matches_scalar_loop(rows in simplex_rows()) {
        let probs: Vec<[f64; 3]> = rows.iter().map(|r| r.0).collect();
        let targets: Vec<[f64; 3]> = rows.iter().map(|r| { let mut t = [0.0; 3]; t[r.1] = 1.0; t }).collect();
        let got = cross_entropy(&probs, &targets).unwrap();
        prop_assert!(got >= 0.0);
        prop_assert!((got - brute_force_ce(&probs, &targets)).abs() < 1e-9);
        let per_row: f64 = (0..probs.len())
            .map(|i| cross_entropy(&probs[i..=i], &targets[i..=i]).unwrap())
            .sum::<f64>() / probs.len() as f64;
        prop_assert!((got - per_row).abs() < 1e-9);
    }
}
