//! Mini-batch training with Adam and categorical cross-entropy.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{Tensor, D};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{atomic_write, sha256_hex};
use crate::corpus::{CategoryLabel, CommentRecord, DatasetSplit, Language, SplitMetadata};
use crate::featurize::glove::{train_glove, GloveConfig};
use crate::featurize::{
    build_vocabulary, default_sequence_length, encode, load_embeddings, EmbeddingMatrix, DEFAULT_MAX_VOCAB,
};
use crate::metrics::{confusion, per_class, weighted_f1};
use crate::models::{
    build_cnn, build_lstm, build_transformer, Architecture, CheckpointStore, Classifier, ModelError, ModelInput,
    ModelSpec, ModelVariant,
};
use crate::textprep::{clean_text, CleanText};

/// Probabilities are clamped to `[CLAMP_EPS, 1 - CLAMP_EPS]` before the log.
pub const CLAMP_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}; weights restored to the state after {restored_epoch} completed epochs")]
    DivergenceDetected {
        epoch: usize,
        batch: usize,
        restored_epoch: usize,
    },
    #[error("training split is empty")]
    EmptyTrainingSet,
    #[error("cannot prepare word vectors: {0}")]
    Featurize(#[from] crate::featurize::FeaturizeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backend(#[from] candle_core::Error),
    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CategoricalCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Stop once validation loss has not improved for `patience` epochs; the
/// best weights are restored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopping {
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub adam: AdamParams,
    #[serde(default)]
    pub loss: LossKind,
    pub seed: u64,
    #[serde(default)]
    pub early_stopping: Option<EarlyStopping>,
    /// Inverse-frequency class weights in the loss.
    #[serde(default)]
    pub class_weights: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be ≥ 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("learning_rate must be > 0".into()));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(TrainError::InvalidConfig("adam betas must lie in [0, 1) and eps be > 0".into()));
        }
        if self.early_stopping.is_some_and(|e| e.patience == 0) {
            return Err(TrainError::InvalidConfig("early_stopping.patience must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// CNN/LSTM: 100 epochs, batch 32, lr 1e-3. Transformers: 5 epochs,
/// batch 32, lr 3e-5.
pub fn default_config(variant: ModelVariant) -> TrainConfig {
    let (epochs, learning_rate) = match variant {
        ModelVariant::Cnn | ModelVariant::Lstm => (100, 1e-3),
        ModelVariant::TransformerFineTune => (5, 3e-5),
    };
    TrainConfig {
        epochs,
        batch_size: 32,
        learning_rate,
        optimizer: OptimizerKind::Adam,
        adam: AdamParams::default(),
        loss: LossKind::CategoricalCrossEntropy,
        seed: 42,
        early_stopping: None,
        class_weights: false,
    }
}

/// Mean over rows of `-Σ_c onehot_c · ln(clamp(p_c))`.
pub fn cross_entropy(probs: &[[f64; 3]], onehot: &[[f64; 3]]) -> Result<f64> {
    if probs.len() != onehot.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} probability rows vs {} target rows",
            probs.len(),
            onehot.len()
        )));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = probs
        .iter()
        .zip(onehot)
        .map(|(p, y)| {
            -(0..3)
                .map(|c| y[c] * p[c].clamp(CLAMP_EPS, 1.0 - CLAMP_EPS).ln())
                .sum::<f64>()
        })
        .sum();
    Ok(total / probs.len() as f64)
}

pub fn onehot(labels: &[CategoryLabel]) -> Vec<[f64; 3]> {
    labels
        .iter()
        .map(|l| {
            let mut row = [0.0; 3];
            row[l.index()] = 1.0;
            row
        })
        .collect()
}

/// Same loss as [`cross_entropy`] on tensors, optionally weighting rows.
fn loss_tensor(logits: &Tensor, labels: &[CategoryLabel], weights: Option<&[f64; 3]>) -> Result<Tensor> {
    let dev = logits.device();
    let n = labels.len();
    let mut target = vec![0f32; n * 3];
    for (i, l) in labels.iter().enumerate() {
        target[i * 3 + l.index()] = weights.map_or(1.0, |w| w[l.index()] as f32);
    }
    let target = Tensor::from_vec(target, (n, 3), dev)?;
    let probs = candle_nn::ops::softmax(logits, D::Minus1)?.clamp(CLAMP_EPS as f32, (1.0 - CLAMP_EPS) as f32)?;
    let per_row = (probs.log()? * target)?.sum(D::Minus1)?;
    Ok((per_row.mean_all()? * -1.0)?)
}

/// `n / (3 · count_c)`; absent classes get weight 0.
fn balanced_weights(labels: &[CategoryLabel]) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    counts.map(|c| if c == 0 { 0.0 } else { labels.len() as f64 / (3.0 * c as f64) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_weighted_f1: Option<f64>,
    pub seconds: f64,
}

/// One record per completed epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("record serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(s: &str) -> serde_json::Result<Self> {
        let epochs = s
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<serde_json::Result<_>>()?;
        Ok(TrainHistory { epochs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_jsonl().as_bytes()).map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Encoded rows with their gold labels.
#[derive(Debug, Clone)]
pub struct LabeledInput {
    pub input: ModelInput,
    pub labels: Vec<CategoryLabel>,
}

impl LabeledInput {
    /// Cleans and encodes labeled records; unlabeled records are an error.
    pub fn from_records(model: &Classifier, records: &[CommentRecord]) -> Result<Self> {
        let labels = records
            .iter()
            .map(|r| {
                r.label
                    .ok_or_else(|| TrainError::ShapeMismatch(format!("record {} has no label", r.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let texts: Vec<CleanText> = records.iter().map(|r| clean_text(&r.text)).collect();
        Ok(LabeledInput {
            input: model.encode(&texts)?,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Trains on the split's training part, monitoring the validation part.
pub fn train(model: &mut Classifier, split: &DatasetSplit, cfg: &TrainConfig) -> Result<TrainHistory> {
    let train_set = LabeledInput::from_records(model, &split.train)?;
    let val_set = LabeledInput::from_records(model, &split.validation)?;
    fit(model, &train_set, (!val_set.is_empty()).then_some(&val_set), cfg)
}

/// Training loop over pre-encoded inputs.
///
/// Batches are drawn from a per-epoch permutation of a ChaCha8 stream seeded
/// by `cfg.seed`, which also drives dropout, so a run is a function of the
/// seed and the data.
pub fn fit(
    model: &mut Classifier,
    train_set: &LabeledInput,
    val_set: Option<&LabeledInput>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(
        model.params().trainable_vars(),
        ParamsAdamW {
            lr: cfg.learning_rate,
            beta1: cfg.adam.beta1,
            beta2: cfg.adam.beta2,
            eps: cfg.adam.eps,
            weight_decay: 0.0,
        },
    )?;
    let weights = cfg.class_weights.then(|| balanced_weights(&train_set.labels));
    let mut history = TrainHistory::default();
    // weights verified to give a finite loss, and the epochs completed then
    let mut last_good = (model.params().snapshot()?, 0);
    let mut best: Option<(f64, HashMap<String, Tensor>)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let input = train_set.input.select(idx);
            let labels: Vec<CategoryLabel> = idx.iter().map(|&i| train_set.labels[i]).collect();
            let logits = model.logits(&input, Some(&mut rng))?;
            let loss = loss_tensor(&logits, &labels, weights.as_ref())?;
            let value = loss.to_scalar::<f32>()? as f64;
            if !value.is_finite() {
                model.params().restore(&last_good.0)?;
                return Err(TrainError::DivergenceDetected {
                    epoch,
                    batch: b + 1,
                    restored_epoch: last_good.1,
                });
            }
            if b == 0 {
                last_good = (model.params().snapshot()?, epoch - 1);
            }
            opt.backward_step(&loss)?;
            loss_sum += value * idx.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_weighted_f1) = match val_set {
            Some(v) => {
                let (loss, f1) = evaluate_loss(model, v, cfg.batch_size)?;
                (Some(loss), f1)
            }
            None => (None, None),
        };
        let seconds = start.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}/{}: train loss {train_loss:.4}{}{} ({seconds:.1}s)",
            cfg.epochs,
            val_loss.map_or(String::new(), |l| format!(", val loss {l:.4}")),
            val_weighted_f1.map_or(String::new(), |f| format!(", val weighted F1 {f:.4}")),
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_weighted_f1,
            seconds,
        });
        if let (Some(es), Some(vl)) = (cfg.early_stopping, val_loss) {
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, model.params().snapshot()?));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= es.patience {
                    log::info!("early stopping after epoch {epoch}");
                    break;
                }
            }
        }
    }
    if let Some((_, snap)) = best {
        model.params().restore(&snap)?;
    }
    Ok(history)
}

/// Mean cross-entropy and weighted F1 (if defined) in inference mode.
pub fn evaluate_loss(model: &Classifier, data: &LabeledInput, batch_size: usize) -> Result<(f64, Option<f64>)> {
    let pred = model.predict_input(&data.input, batch_size)?;
    let loss = cross_entropy(&pred.probabilities, &onehot(&data.labels))?;
    let f1 = confusion(&data.labels, &pred.labels)
        .ok()
        .and_then(|cm| weighted_f1(&per_class(&cm)).ok());
    Ok((loss, f1))
}

/// Fraction of rows whose argmax label equals the gold label.
pub fn accuracy(model: &Classifier, data: &LabeledInput, batch_size: usize) -> Result<f64> {
    let pred = model.predict_input(&data.input, batch_size)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let hits = pred.labels.iter().zip(&data.labels).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Builds an untrained classifier for `spec` from the training texts.
///
/// Word models get a vocabulary from the cleaned training texts, a resolved
/// sequence length when `max_len` is unset, and embeddings from the
/// configured vectors file (relative paths resolve against `base_dir`) or
/// corpus-local GloVe vectors. Transformers load their checkpoint from
/// `store`.
pub fn build_model(
    spec: &ModelSpec,
    train_records: &[CommentRecord],
    store: &CheckpointStore,
    base_dir: &Path,
    seed: u64,
) -> Result<Classifier> {
    spec.validate()?;
    let Some(emb_spec) = spec.word_embedding() else {
        return Ok(build_transformer(spec, store, seed)?);
    };
    let texts: Vec<CleanText> = train_records.iter().map(|r| clean_text(&r.text)).collect();
    let vocab = build_vocabulary(&texts, DEFAULT_MAX_VOCAB)?;
    let seqs: Vec<_> = texts.iter().map(|t| encode(t, &vocab)).collect();
    let mut spec = spec.clone();
    let default_len = default_sequence_length(&seqs);
    match &mut spec.architecture {
        Architecture::Cnn(c) => {
            c.max_len.get_or_insert(default_len);
        }
        Architecture::Lstm(l) => {
            l.max_len.get_or_insert(default_len);
        }
        Architecture::TransformerFineTune(_) => unreachable!(),
    }
    let embeddings = match &emb_spec.vectors {
        Some(path) => load_embeddings(&base_dir.join(path), &vocab, emb_spec.dim, seed)?,
        None => {
            let glove_cfg = GloveConfig {
                dim: emb_spec.dim,
                ..GloveConfig::default()
            };
            let vectors = train_glove(&texts, &vocab, &glove_cfg, seed);
            EmbeddingMatrix::from_vectors(&vocab, &vectors, seed)
        }
    };
    let clf = match spec.variant() {
        ModelVariant::Cnn => build_cnn(&spec, vocab, Some(&embeddings), seed)?,
        _ => build_lstm(&spec, vocab, Some(&embeddings), seed)?,
    };
    Ok(clf)
}

/// SHA-256 over the records' id, label and text, one TSV line each.
pub fn records_hash(records: &[CommentRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.id);
        s.push('\t');
        s.push_str(r.label.map_or("", |l| l.as_str()));
        s.push('\t');
        s.push_str(&r.text);
        s.push('\n');
    }
    sha256_hex(s.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHashes {
    pub train: String,
    pub validation: String,
    pub test: String,
}

/// Everything needed to reproduce a training run. Written next to the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub language: Language,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub seed: u64,
    pub datasets: DatasetHashes,
    pub split: SplitMetadata,
    /// Hash of the configuration file the run was launched from, if any.
    #[serde(default)]
    pub config_hash: Option<String>,
    /// The validation split is this toolkit's protocol choice, used for
    /// monitoring only.
    pub validation_protocol: String,
    pub parameter_count: usize,
}

impl RunManifest {
    pub fn new(model: &Classifier, split: &DatasetSplit, train: &TrainConfig, config_hash: Option<String>) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            language: split.language,
            model: model.spec().clone(),
            train: train.clone(),
            seed: train.seed,
            datasets: DatasetHashes {
                train: records_hash(&split.train),
                validation: records_hash(&split.validation),
                test: records_hash(&split.test),
            },
            split: split.metadata(),
            config_hash,
            validation_protocol: "held-out validation split for per-epoch monitoring only".into(),
            parameter_count: model.parameter_count(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// Hash identifying the run inputs: datasets, configs and seed.
    pub fn inputs_hash(&self) -> String {
        let key = serde_json::json!({
            "datasets": self.datasets,
            "model": self.model,
            "train": self.train,
            "seed": self.seed,
            "config_hash": self.config_hash,
        });
        sha256_hex(key.to_string().as_bytes())
    }
}
