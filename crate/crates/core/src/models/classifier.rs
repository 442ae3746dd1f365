use std::path::Path;

use candle_core::{Module, Tensor, D};
use candle_nn::Linear;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{load_weights, CheckpointStore};
use super::cnn::{cnn_parameter_count, CnnNet};
use super::encoder::{dropout, EncoderConfig, TransformerEncoder};
use super::lstm::{lstm_parameter_count, LstmNet};
use super::params::{Init, ParamStore};
use super::tokenizer::SubwordTokenizer;
use super::{argmax_label, Architecture, ModelError, ModelSpec, ModelVariant, Result, NUM_CLASSES};
use crate::corpus::CategoryLabel;
use crate::featurize::{encode, pad_batch, EmbeddingMatrix, PaddedBatch, Vocabulary, MAX_SEQUENCE_CAP};
use crate::textprep::CleanText;

const SPEC_FILE: &str = "spec.json";
const WEIGHTS_FILE: &str = "weights.safetensors";
const LABELS_FILE: &str = "labels.txt";
const VOCAB_FILE: &str = "vocab.tsv";
const ENCODER_CONFIG_FILE: &str = "encoder_config.json";

/// Subword ids wrapped in `[CLS] … [SEP]`, padded to the longest row.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTransformerBatch {
    pub ids: Vec<u32>,
    /// 1 on real tokens (markers included), 0 on padding.
    pub mask: Vec<f32>,
    /// Single-segment inputs: all zeros.
    pub segment_ids: Vec<u32>,
    pub rows: usize,
    pub width: usize,
}

impl EncodedTransformerBatch {
    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.width..(i + 1) * self.width]
    }

    fn select(&self, idx: &[usize]) -> Self {
        let mut ids = Vec::with_capacity(idx.len() * self.width);
        let mut mask = Vec::with_capacity(idx.len() * self.width);
        let mut segment_ids = Vec::with_capacity(idx.len() * self.width);
        for &i in idx {
            let range = i * self.width..(i + 1) * self.width;
            ids.extend_from_slice(&self.ids[range.clone()]);
            mask.extend_from_slice(&self.mask[range.clone()]);
            segment_ids.extend_from_slice(&self.segment_ids[range]);
        }
        EncodedTransformerBatch {
            ids,
            mask,
            segment_ids,
            rows: idx.len(),
            width: self.width,
        }
    }
}

/// Tokenizes each text, truncating to `max_tokens` including both markers.
pub fn encode_for_transformer(
    tokenizer: &SubwordTokenizer,
    texts: &[&str],
    max_tokens: usize,
) -> Result<EncodedTransformerBatch> {
    if max_tokens < 2 {
        return Err(ModelError::InvalidSpec("max_tokens must be ≥ 2".into()));
    }
    let sp = tokenizer.special();
    let mut rows = Vec::with_capacity(texts.len());
    for text in texts {
        let mut ids = tokenizer.encode(text)?;
        ids.truncate(max_tokens - 2);
        let mut row = Vec::with_capacity(ids.len() + 2);
        row.push(sp.cls);
        row.extend(ids);
        row.push(sp.sep);
        rows.push(row);
    }
    let width = rows.iter().map(Vec::len).max().unwrap_or(2);
    let mut ids = vec![sp.pad; rows.len() * width];
    let mut mask = vec![0f32; rows.len() * width];
    for (r, row) in rows.iter().enumerate() {
        ids[r * width..r * width + row.len()].copy_from_slice(row);
        mask[r * width..r * width + row.len()].fill(1.0);
    }
    Ok(EncodedTransformerBatch {
        segment_ids: vec![0; ids.len()],
        ids,
        mask,
        rows: rows.len(),
        width,
    })
}

/// Encoded inputs for one of the two input families.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput {
    Words(PaddedBatch),
    Subwords(EncodedTransformerBatch),
}

impl ModelInput {
    pub fn rows(&self) -> usize {
        match self {
            ModelInput::Words(b) => b.rows,
            ModelInput::Subwords(b) => b.rows,
        }
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        match self {
            ModelInput::Words(b) => ModelInput::Words(b.select(idx)),
            ModelInput::Subwords(b) => ModelInput::Subwords(b.select(idx)),
        }
    }
}

/// Per-row class probabilities and their argmax labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<[f64; 3]>,
    pub labels: Vec<CategoryLabel>,
}

enum Net {
    Cnn(CnnNet),
    Lstm(LstmNet),
    Transformer {
        encoder: TransformerEncoder,
        head: Linear,
    },
}

enum InputEncoder {
    Words { vocab: Vocabulary, max_len: usize },
    Subwords { tokenizer: SubwordTokenizer, max_tokens: usize },
}

/// A built classifier: spec, parameters, network and input encoding.
pub struct Classifier {
    spec: ModelSpec,
    params: ParamStore,
    net: Net,
    input: InputEncoder,
}

impl std::fmt::Debug for Classifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Classifier")
            .field("spec", &self.spec)
            .field("parameters", &self.params.parameter_count())
            .finish()
    }
}

fn expect_variant(spec: &ModelSpec, expected: ModelVariant) -> Result<()> {
    if spec.variant() != expected {
        return Err(ModelError::SpecMismatch {
            expected,
            found: spec.variant(),
        });
    }
    spec.validate()
}

fn check_embeddings(vocab: &Vocabulary, dim: usize, emb: Option<&EmbeddingMatrix>) -> Result<()> {
    match emb {
        Some(e) if e.vocab_size != vocab.len() || e.dim != dim => Err(ModelError::ShapeMismatch(format!(
            "embedding matrix is {}x{}, model expects {}x{dim}",
            e.vocab_size,
            e.dim,
            vocab.len()
        ))),
        _ => Ok(()),
    }
}

/// CNN over word ids. An unset `max_len` resolves to the sequence cap.
pub fn build_cnn(
    spec: &ModelSpec,
    vocab: Vocabulary,
    embeddings: Option<&EmbeddingMatrix>,
    seed: u64,
) -> Result<Classifier> {
    expect_variant(spec, ModelVariant::Cnn)?;
    build_words(spec.clone(), vocab, embeddings, ParamStore::new(seed))
}

/// LSTM over word ids. An unset `max_len` resolves to the sequence cap.
pub fn build_lstm(
    spec: &ModelSpec,
    vocab: Vocabulary,
    embeddings: Option<&EmbeddingMatrix>,
    seed: u64,
) -> Result<Classifier> {
    expect_variant(spec, ModelVariant::Lstm)?;
    build_words(spec.clone(), vocab, embeddings, ParamStore::new(seed))
}

fn build_words(
    mut spec: ModelSpec,
    vocab: Vocabulary,
    embeddings: Option<&EmbeddingMatrix>,
    mut params: ParamStore,
) -> Result<Classifier> {
    let v = vocab.len();
    let (net, max_len) = match &mut spec.architecture {
        Architecture::Cnn(c) => {
            check_embeddings(&vocab, c.embedding.dim, embeddings)?;
            let max_len = *c.max_len.get_or_insert(MAX_SEQUENCE_CAP);
            (Net::Cnn(CnnNet::new(c, v, embeddings, &mut params)?), max_len)
        }
        Architecture::Lstm(l) => {
            check_embeddings(&vocab, l.embedding.dim, embeddings)?;
            let max_len = *l.max_len.get_or_insert(MAX_SEQUENCE_CAP);
            (Net::Lstm(LstmNet::new(l, v, embeddings, &mut params)?), max_len)
        }
        Architecture::TransformerFineTune(_) => unreachable!("word models only"),
    };
    Ok(Classifier {
        spec,
        params,
        net,
        input: InputEncoder::Words { vocab, max_len },
    })
}

/// Pretrained encoder from the local checkpoint store plus a freshly
/// initialized classification head on the `[CLS]` vector.
pub fn build_transformer(spec: &ModelSpec, store: &CheckpointStore, seed: u64) -> Result<Classifier> {
    expect_variant(spec, ModelVariant::TransformerFineTune)?;
    let Architecture::TransformerFineTune(t) = &spec.architecture else {
        unreachable!()
    };
    let files = store.resolve(t.checkpoint)?;
    let cfg = files.read_config()?;
    if cfg.architecture != t.checkpoint.architecture() {
        return Err(ModelError::BadArtifact {
            path: files.config.clone(),
            reason: format!(
                "{} expects a {:?} encoder, config declares {:?}",
                t.checkpoint,
                t.checkpoint.architecture(),
                cfg.architecture
            ),
        });
    }
    let weights = load_weights(&files.weights, cfg.architecture)?;
    let tokenizer = SubwordTokenizer::load(&files.tokenizer)?;
    let params = ParamStore::with_source(weights, seed, false);
    let clf = build_transformer_parts(spec.clone(), cfg, tokenizer, params, true)?;
    log::info!(
        "loaded {} from {} ({} parameters)",
        t.checkpoint,
        files.dir.display(),
        clf.parameter_count()
    );
    Ok(clf)
}

fn build_transformer_parts(
    spec: ModelSpec,
    cfg: EncoderConfig,
    tokenizer: SubwordTokenizer,
    mut params: ParamStore,
    fresh_head: bool,
) -> Result<Classifier> {
    let Architecture::TransformerFineTune(t) = &spec.architecture else {
        unreachable!()
    };
    if tokenizer.vocab_size() > cfg.vocab_size {
        return Err(ModelError::ShapeMismatch(format!(
            "tokenizer has {} tokens, encoder embeds {}",
            tokenizer.vocab_size(),
            cfg.vocab_size
        )));
    }
    let max_tokens = t.max_tokens.min(cfg.max_position_embeddings);
    let encoder = TransformerEncoder::new(&cfg, &mut params)?;
    let (_, missing) = params.provenance();
    if missing > 0 {
        return Err(ModelError::ShapeMismatch(format!(
            "{missing} encoder parameters are missing from the checkpoint weights"
        )));
    }
    let h = cfg.hidden_size;
    let init = Init::Normal(cfg.initializer_range);
    let w = params.get("classifier.weight", &[NUM_CLASSES, h], init, true)?;
    let b = params.get("classifier.bias", &[NUM_CLASSES], Init::Zeros, true)?;
    if !fresh_head && params.provenance().1 > 0 {
        return Err(ModelError::ShapeMismatch("classification head missing from saved weights".into()));
    }
    Ok(Classifier {
        spec,
        params,
        net: Net::Transformer {
            encoder,
            head: Linear::new(w, Some(b)),
        },
        input: InputEncoder::Subwords { tokenizer, max_tokens },
    })
}

impl Classifier {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    /// Closed-form count for the word models; `None` for transformers.
    pub fn expected_parameter_count(&self) -> Option<usize> {
        let InputEncoder::Words { vocab, .. } = &self.input else {
            return None;
        };
        match &self.spec.architecture {
            Architecture::Cnn(c) => Some(cnn_parameter_count(c, vocab.len())),
            Architecture::Lstm(l) => Some(lstm_parameter_count(l, vocab.len())),
            Architecture::TransformerFineTune(_) => None,
        }
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        match &self.input {
            InputEncoder::Words { vocab, .. } => Some(vocab),
            InputEncoder::Subwords { .. } => None,
        }
    }

    pub fn tokenizer(&self) -> Option<&SubwordTokenizer> {
        match &self.input {
            InputEncoder::Subwords { tokenizer, .. } => Some(tokenizer),
            InputEncoder::Words { .. } => None,
        }
    }

    pub fn encoder_config(&self) -> Option<&EncoderConfig> {
        match &self.net {
            Net::Transformer { encoder, .. } => Some(encoder.config()),
            _ => None,
        }
    }

    /// Padded width for word models, token cap for transformers.
    pub fn max_len(&self) -> usize {
        match &self.input {
            InputEncoder::Words { max_len, .. } => *max_len,
            InputEncoder::Subwords { max_tokens, .. } => *max_tokens,
        }
    }

    pub fn encode(&self, texts: &[CleanText]) -> Result<ModelInput> {
        match &self.input {
            InputEncoder::Words { vocab, max_len } => {
                let seqs: Vec<_> = texts.iter().map(|t| encode(t, vocab)).collect();
                let batch = pad_batch(&seqs, *max_len).map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
                Ok(ModelInput::Words(batch))
            }
            InputEncoder::Subwords { tokenizer, max_tokens } => {
                let strs: Vec<&str> = texts.iter().map(|t| t.as_str()).collect();
                Ok(ModelInput::Subwords(encode_for_transformer(tokenizer, &strs, *max_tokens)?))
            }
        }
    }

    /// Unnormalized scores (N, 3). Passing an RNG enables dropout.
    pub fn logits(&self, input: &ModelInput, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let dev = self.params.device();
        match (&self.net, input, &self.input) {
            (Net::Cnn(_) | Net::Lstm(_), ModelInput::Words(b), InputEncoder::Words { vocab, .. }) => {
                if let Some(&bad) = b.ids.iter().find(|&&id| id as usize >= vocab.len()) {
                    return Err(ModelError::ShapeMismatch(format!(
                        "token id {bad} outside vocabulary of {}",
                        vocab.len()
                    )));
                }
                match &self.net {
                    Net::Cnn(net) => {
                        let ids = Tensor::from_vec(b.ids.clone(), (b.rows, b.width), dev)?;
                        net.forward(&ids)
                    }
                    Net::Lstm(net) => {
                        // steps past the longest row cannot affect any readout
                        let lengths: Vec<usize> = (0..b.rows).map(|i| b.row_len(i)).collect();
                        let width = lengths.iter().copied().max().unwrap_or(0).max(1);
                        let ids = Tensor::from_vec(b.ids.clone(), (b.rows, b.width), dev)?.narrow(1, 0, width)?;
                        net.forward(&ids, &lengths)
                    }
                    Net::Transformer { .. } => unreachable!(),
                }
            }
            (Net::Transformer { encoder, head }, ModelInput::Subwords(b), _) => {
                let cfg = encoder.config();
                if let Some(&bad) = b.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
                    return Err(ModelError::ShapeMismatch(format!(
                        "subword id {bad} outside vocabulary of {}",
                        cfg.vocab_size
                    )));
                }
                let ids = Tensor::from_vec(b.ids.clone(), (b.rows, b.width), dev)?;
                let types = Tensor::from_vec(b.segment_ids.clone(), (b.rows, b.width), dev)?;
                let mask = Tensor::from_vec(b.mask.clone(), (b.rows, b.width), dev)?;
                let mut rng = rng;
                let hidden = encoder.forward(&ids, &types, &mask, rng.as_deref_mut())?;
                let cls = hidden.narrow(1, 0, 1)?.squeeze(1)?;
                let cls = dropout(&cls, cfg.hidden_dropout_prob, rng)?;
                Ok(head.forward(&cls)?)
            }
            _ => Err(ModelError::ShapeMismatch(format!(
                "{} model cannot consume this input kind",
                self.spec.variant()
            ))),
        }
    }

    /// Softmax probabilities (N, 3); inference mode.
    pub fn probabilities(&self, input: &ModelInput) -> Result<Tensor> {
        Ok(candle_nn::ops::softmax(&self.logits(input, None)?, D::Minus1)?)
    }

    pub fn predict_input(&self, input: &ModelInput, batch_size: usize) -> Result<Prediction> {
        let batch_size = batch_size.max(1);
        let mut probabilities = Vec::with_capacity(input.rows());
        let all: Vec<usize> = (0..input.rows()).collect();
        for idx in all.chunks(batch_size) {
            let probs = self.probabilities(&input.select(idx))?.to_vec2::<f32>()?;
            probabilities.extend(probs.into_iter().map(|r| [r[0] as f64, r[1] as f64, r[2] as f64]));
        }
        let labels = probabilities.iter().map(argmax_label).collect();
        Ok(Prediction { probabilities, labels })
    }

    pub fn predict(&self, texts: &[CleanText], batch_size: usize) -> Result<Prediction> {
        let input = self.encode(texts)?;
        self.predict_input(&input, batch_size)
    }

    /// Writes spec, weights, label order and the input encoder into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path, source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let path = dir.join(name);
            crate::artifact::atomic_write(&path, bytes).map_err(|e| io(&path, e))
        };
        write(SPEC_FILE, serde_json::to_string_pretty(&self.spec).expect("spec serializes").as_bytes())?;
        let labels: Vec<&str> = CategoryLabel::ALL.iter().map(|l| l.as_str()).collect();
        write(LABELS_FILE, format!("{}\n", labels.join("\n")).as_bytes())?;
        match &self.input {
            InputEncoder::Words { vocab, .. } => write(VOCAB_FILE, vocab.to_tsv().as_bytes())?,
            InputEncoder::Subwords { tokenizer, .. } => {
                let cfg = self.encoder_config().expect("transformer has a config");
                write(ENCODER_CONFIG_FILE, serde_json::to_string_pretty(cfg).expect("config serializes").as_bytes())?;
                let src = tokenizer.source();
                let name = src.file_name().ok_or_else(|| {
                    ModelError::InvalidSpec("tokenizer was not loaded from a file and cannot be saved".into())
                })?;
                let bytes = std::fs::read(src).map_err(|e| io(src, e))?;
                write(&name.to_string_lossy(), &bytes)?;
            }
        }
        self.params.save(&dir.join(WEIGHTS_FILE))
    }

    /// Restores a classifier written by [`Classifier::save`]; every parameter
    /// must be present in the stored weights.
    pub fn load(dir: &Path) -> Result<Self> {
        let bad = |path: &Path, reason: String| ModelError::BadArtifact {
            path: path.to_path_buf(),
            reason,
        };
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| ModelError::Io { path, source })
        };
        let spec: ModelSpec =
            serde_json::from_str(&read(SPEC_FILE)?).map_err(|e| bad(&dir.join(SPEC_FILE), e.to_string()))?;
        spec.validate()?;
        let labels: Vec<String> = read(LABELS_FILE)?.lines().map(str::to_string).collect();
        let expected: Vec<String> = CategoryLabel::ALL.iter().map(|l| l.as_str().to_string()).collect();
        if labels != expected {
            return Err(bad(&dir.join(LABELS_FILE), format!("label order {labels:?} differs from {expected:?}")));
        }
        let weights_path = dir.join(WEIGHTS_FILE);
        let weights = candle_core::safetensors::load(&weights_path, &candle_core::Device::Cpu)
            .map_err(|e| bad(&weights_path, e.to_string()))?;
        let params = ParamStore::with_source(weights, 0, true);
        match spec.variant() {
            ModelVariant::Cnn | ModelVariant::Lstm => {
                let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))
                    .map_err(|e| bad(&dir.join(VOCAB_FILE), e.to_string()))?;
                build_words(spec, vocab, None, params)
            }
            ModelVariant::TransformerFineTune => {
                let cfg_path = dir.join(ENCODER_CONFIG_FILE);
                let cfg: EncoderConfig =
                    serde_json::from_str(&read(ENCODER_CONFIG_FILE)?).map_err(|e| bad(&cfg_path, e.to_string()))?;
                let tok_path = ["tokenizer.json", "vocab.txt"]
                    .iter()
                    .map(|n| dir.join(n))
                    .find(|p| p.is_file())
                    .ok_or_else(|| bad(dir, "no tokenizer.json or vocab.txt".into()))?;
                let tokenizer = SubwordTokenizer::load(&tok_path)?;
                build_transformer_parts(spec, cfg, tokenizer, params, false)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CnnSpec, LstmSpec, WordEmbeddingSpec};
    use crate::textprep::clean_text;

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(["nalla", "padam", "mosham", "chetta"]).unwrap()
    }

    fn small_emb() -> WordEmbeddingSpec {
        WordEmbeddingSpec {
            dim: 6,
            ..Default::default()
        }
    }

    fn texts() -> Vec<CleanText> {
        ["nalla padam", "mosham", "", "chetta nalla nalla padam unknownword"]
            .iter()
            .map(|s| clean_text(s))
            .collect()
    }

    #[test]
    fn word_models_match_closed_form_counts_and_emit_distributions() {
        let cnn = ModelSpec::cnn(CnnSpec {
            filters: 4,
            kernel_width: 3,
            max_len: Some(7),
            embedding: small_emb(),
            ..Default::default()
        });
        let lstm = ModelSpec::lstm(LstmSpec {
            hidden_units: 5,
            max_len: Some(7),
            embedding: small_emb(),
        });
        for (spec, build) in [
            (cnn, build_cnn as fn(&ModelSpec, Vocabulary, Option<&EmbeddingMatrix>, u64) -> Result<Classifier>),
            (lstm, build_lstm),
        ] {
            let clf = build(&spec, vocab(), None, 0).unwrap();
            assert_eq!(Some(clf.parameter_count()), clf.expected_parameter_count());
            let p = clf.predict(&texts(), 3).unwrap();
            assert_eq!(p.probabilities.len(), 4);
            for row in &p.probabilities {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5);
                assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }
    }

    #[test]
    fn wrong_builder_is_rejected() {
        let spec = ModelSpec::lstm(LstmSpec::default());
        assert!(matches!(
            build_cnn(&spec, vocab(), None, 0),
            Err(ModelError::SpecMismatch { .. })
        ));
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let spec = ModelSpec::cnn(CnnSpec {
            filters: 2,
            kernel_width: 2,
            max_len: Some(3),
            embedding: small_emb(),
            ..Default::default()
        });
        let clf = build_cnn(&spec, vocab(), None, 0).unwrap();
        let bad = PaddedBatch {
            ids: vec![2, 99, 0],
            rows: 1,
            width: 3,
            labels: None,
        };
        assert!(matches!(
            clf.logits(&ModelInput::Words(bad), None),
            Err(ModelError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let spec = ModelSpec::lstm(LstmSpec {
            hidden_units: 3,
            max_len: None,
            embedding: small_emb(),
        });
        let clf = build_lstm(&spec, vocab(), None, 9).unwrap();
        assert_eq!(clf.max_len(), MAX_SEQUENCE_CAP);
        let tmp = tempfile::tempdir().unwrap();
        clf.save(tmp.path()).unwrap();
        let back = Classifier::load(tmp.path()).unwrap();
        assert_eq!(back.spec(), clf.spec());
        let a = clf.predict(&texts(), 8).unwrap();
        let b = back.predict(&texts(), 8).unwrap();
        assert_eq!(a, b);
    }
}
