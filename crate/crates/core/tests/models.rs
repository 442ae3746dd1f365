mod common;

use htdetect_core::models::{
    build_transformer, encode_for_transformer, CheckpointName, CheckpointStore, Classifier, CnnSpec, LstmSpec,
    ModelError, ModelSpec, SubwordTokenizer, TransformerSpec, WordPiece,
};
use htdetect_core::trainer::build_model;
use htdetect_core::{clean_text, CleanText};

use common::*;

fn assert_simplex(rows: &[[f64; 3]]) {
    for r in rows {
        assert!(r.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)), "{r:?}");
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6, "{r:?}");
    }
}

fn all_models(store: &CheckpointStore) -> Vec<Classifier> {
    let corpus = separable_corpus(5, 1);
    let tmp = std::env::temp_dir();
    vec![
        ModelSpec::cnn(CnnSpec {
            filters: 8,
            embedding: small_embedding(),
            ..Default::default()
        }),
        ModelSpec::lstm(LstmSpec {
            hidden_units: 8,
            max_len: None,
            embedding: small_embedding(),
        }),
        ModelSpec::transformer(TransformerSpec::new(CheckpointName::MBert)),
        ModelSpec::transformer(TransformerSpec::new(CheckpointName::IndicBert)),
    ]
    .iter()
    .map(|s| build_model(s, &corpus, store, &tmp, 3).unwrap())
    .collect()
}

fn texts(v: &[&str]) -> Vec<CleanText> {
    v.iter().map(|s| clean_text(s)).collect()
}

#[test]
fn every_variant_emits_probability_rows() {
    let dir = tempfile::tempdir().unwrap();
    let store = tiny_checkpoint_store(dir.path());
    let inputs = texts(&["kappa oru", "", "nalla padam nalla", "unseen words only here", "delta"]);
    for m in all_models(&store) {
        let p = m.predict(&inputs, 2).unwrap();
        assert_eq!(p.probabilities.len(), inputs.len());
        assert_simplex(&p.probabilities);
    }
}

#[test]
fn inference_is_deterministic_and_batch_independent() {
    let dir = tempfile::tempdir().unwrap();
    let store = tiny_checkpoint_store(dir.path());
    let a = texts(&["kappa oru", "nalla padam", "delta theta video"]);
    let b = texts(&["delta theta video", "kappa oru", "nalla padam"]);
    for m in all_models(&store) {
        let pa = m.predict(&a, 8).unwrap();
        let pb = m.predict(&b, 1).unwrap();
        assert_eq!(pa, m.predict(&a, 8).unwrap(), "{}", m.spec().display_name());
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            for c in 0..3 {
                assert!((pa.probabilities[i][c] - pb.probabilities[j][c]).abs() < 1e-5);
            }
        }
        let same = m.predict(&texts(&["kappa oru", "kappa oru"]), 8).unwrap();
        assert_eq!(same.probabilities[0], same.probabilities[1]);
    }
}

#[test]
fn all_padding_row_is_valid() {
    let spec = ModelSpec::cnn(CnnSpec {
        filters: 4,
        max_len: Some(6),
        embedding: small_embedding(),
        ..Default::default()
    });
    let tmp = std::env::temp_dir();
    let m = build_model(&spec, &separable_corpus(3, 0), &CheckpointStore::new(&tmp), &tmp, 0).unwrap();
    let p = m.predict(&texts(&[""]), 1).unwrap();
    assert_simplex(&p.probabilities);
}

#[test]
fn transformer_loads_are_reproducible_and_heads_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let store = tiny_checkpoint_store(dir.path());
    let spec = ModelSpec::transformer(TransformerSpec::new(CheckpointName::MBert));
    let x = texts(&["kappa oru video", "nalla"]);
    let a = build_transformer(&spec, &store, 11).unwrap();
    let b = build_transformer(&spec, &store, 11).unwrap();
    let c = build_transformer(&spec, &store, 12).unwrap();
    let ia = a.encode(&x).unwrap();
    let la = a.logits(&ia, None).unwrap().to_vec2::<f32>().unwrap();
    let lb = b.logits(&ia, None).unwrap().to_vec2::<f32>().unwrap();
    let lc = c.logits(&ia, None).unwrap().to_vec2::<f32>().unwrap();
    assert_eq!(la, lb);
    assert_ne!(la, lc);
    assert_eq!(a.encoder_config().unwrap().num_hidden_layers, 2);
}

#[test]
fn missing_checkpoint_is_reported_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::transformer(TransformerSpec::new(CheckpointName::MBert));
    let err = build_transformer(&spec, &CheckpointStore::new(dir.path()), 0).unwrap_err();
    assert!(matches!(err, ModelError::CheckpointUnavailable { .. }));
    assert!(err.to_string().contains("bert-base-multilingual-cased"));
}

#[test]
fn reference_mbert_has_twelve_layers() {
    assert_eq!(CheckpointName::MBert.reference_config().num_hidden_layers, 12);
    let store = CheckpointStore::from_env();
    let spec = ModelSpec::transformer(TransformerSpec::new(CheckpointName::MBert));
    match build_transformer(&spec, &store, 0) {
        Ok(m) => assert_eq!(m.encoder_config().unwrap().num_hidden_layers, 12),
        Err(ModelError::CheckpointUnavailable { .. }) => eprintln!("SKIP: mBERT checkpoint not present locally"),
        Err(e) => panic!("{e}"),
    }
}

fn tokenizer() -> SubwordTokenizer {
    SubwordTokenizer::from_wordpiece(WordPiece::from_tokens(wordpiece_vocab()).unwrap()).unwrap()
}

#[test]
fn transformer_encoding_examples() {
    let tok = tokenizer();
    let sp = tok.special();
    let b = encode_for_transformer(&tok, &["", "kappa oru video"], 16).unwrap();
    assert_eq!(b.width, 5);
    assert_eq!(b.row(0), &[sp.cls, sp.sep, sp.pad, sp.pad, sp.pad]);
    assert_eq!(b.mask.len(), b.ids.len());
    assert_eq!(&b.mask[..5], &[1.0, 1.0, 0.0, 0.0, 0.0]);
    assert_eq!(b.row(1)[0], sp.cls);
    assert_eq!(b.row(1)[4], sp.sep);

    let long = vec!["kappa"; 40].join(" ");
    let t = encode_for_transformer(&tok, &[&long], 8).unwrap();
    assert_eq!(t.width, 8);
    assert_eq!(t.row(0)[0], sp.cls);
    assert_eq!(t.row(0)[7], sp.sep);
}

#[test]
fn save_and_load_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let store = tiny_checkpoint_store(&dir.path().join("ckpt"));
    let x = texts(&["kappa oru", "nalla padam", ""]);
    for (i, m) in all_models(&store).into_iter().enumerate() {
        let out = dir.path().join(format!("m{i}"));
        m.save(&out).unwrap();
        let back = Classifier::load(&out).unwrap();
        assert_eq!(back.spec(), m.spec());
        assert_eq!(back.parameter_count(), m.parameter_count());
        assert_eq!(back.predict(&x, 4).unwrap(), m.predict(&x, 4).unwrap());
    }
}

#[test]
fn word_model_counts_follow_layer_formulas() {
    let tmp = std::env::temp_dir();
    let store = CheckpointStore::new(&tmp);
    let corpus = separable_corpus(4, 2);
    for spec in default_specs().into_iter().take(2) {
        let m = build_model(&spec, &corpus, &store, &tmp, 0).unwrap();
        let v = m.vocabulary().unwrap().len();
        let expected = match spec.architecture {
            htdetect_core::models::Architecture::Cnn(_) => v * 100 + (128 * 100 * 5 + 128) + (128 * 3 + 3),
            _ => v * 100 + 4 * 128 * (100 + 128) + 8 * 128 + (128 * 128 + 128) + (128 * 3 + 3),
        };
        assert_eq!(m.parameter_count(), expected);
    }
}
