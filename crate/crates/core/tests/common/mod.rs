#![allow(dead_code)]

use std::path::Path;

use htdetect_core::models::{
    write_random_checkpoint, CheckpointName, CheckpointStore, CnnSpec, EncoderArchitecture, EncoderConfig,
    LstmSpec, ModelSpec, TransformerSpec, WordEmbeddingSpec,
};
use htdetect_core::{CategoryLabel, CommentRecord, Language};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CUES: [&[&str]; 3] = [
    &["kappa", "lambda", "sigma", "zeta"],
    &["delta", "theta", "omega", "rho"],
    &["nalla", "padam", "super", "kidu"],
];
pub const FILLER: [&str; 6] = ["oru", "video", "ithu", "athu", "enna", "pakshe"];

/// Comments whose label is decided by which cue words they contain.
pub fn separable_corpus(per_class: usize, seed: u64) -> Vec<CommentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (c, cues) in CUES.iter().enumerate() {
        for i in 0..per_class {
            let mut words: Vec<&str> = (0..2).map(|_| *cues.choose(&mut rng).unwrap()).collect();
            let n_fill = rng.gen_range(1..=3);
            words.extend((0..n_fill).map(|_| *FILLER.choose(&mut rng).unwrap()));
            words.shuffle(&mut rng);
            out.push(CommentRecord {
                id: format!("s{c}-{i:03}"),
                text: words.join(" "),
                label: Some(CategoryLabel::ALL[c]),
                language: Language::Malayalam,
            });
        }
    }
    out
}

pub fn wordpiece_vocab() -> Vec<String> {
    let mut v: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"].iter().map(|s| s.to_string()).collect();
    for cues in CUES {
        v.extend(cues.iter().map(|s| s.to_string()));
    }
    v.extend(FILLER.iter().map(|s| s.to_string()));
    v.extend(["##s", "##a", "##e", "a", "e", "i", "o", "u"].iter().map(|s| s.to_string()));
    v
}

pub fn tiny_config(arch: EncoderArchitecture, vocab_size: usize) -> EncoderConfig {
    EncoderConfig {
        architecture: arch,
        vocab_size,
        hidden_size: 32,
        num_hidden_layers: 2,
        num_attention_heads: 4,
        intermediate_size: 64,
        hidden_act: "gelu".into(),
        hidden_dropout_prob: 0.0,
        attention_probs_dropout_prob: 0.0,
        max_position_embeddings: 64,
        type_vocab_size: 2,
        layer_norm_eps: 1e-12,
        initializer_range: 0.02,
        embedding_size: (arch == EncoderArchitecture::Albert).then_some(16),
        num_hidden_groups: 1,
        inner_group_num: 1,
    }
}

/// A checkpoint store holding small random-weight stand-ins for both
/// pretrained encoders, in the same on-disk layout as the real ones.
pub fn tiny_checkpoint_store(root: &Path) -> CheckpointStore {
    let store = CheckpointStore::new(root);
    let vocab = wordpiece_vocab();
    for name in CheckpointName::ALL {
        let cfg = tiny_config(name.architecture(), vocab.len());
        write_random_checkpoint(&store.dir_for(name), &cfg, &vocab, 7).unwrap();
    }
    store
}

pub fn small_embedding() -> WordEmbeddingSpec {
    WordEmbeddingSpec {
        dim: 16,
        ..Default::default()
    }
}

/// The four model families at the default sizes the toolkit trains with.
pub fn default_specs() -> Vec<ModelSpec> {
    vec![
        ModelSpec::cnn(CnnSpec::default()),
        ModelSpec::lstm(LstmSpec::default()),
        ModelSpec::transformer(TransformerSpec::new(CheckpointName::MBert)),
        ModelSpec::transformer(TransformerSpec::new(CheckpointName::IndicBert)),
    ]
}
