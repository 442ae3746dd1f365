//! The four classifier families behind one [`Classifier`] type.
//!
//! - CNN: word embeddings → 1-D convolution (ReLU) → max pooling → dense softmax
//! - LSTM: word embeddings → LSTM (last real token) → ReLU dense → dense softmax
//! - mBERT / IndicBERT: pretrained BERT or ALBERT encoder → dense softmax on
//!   the classification-marker vector
//!
//! Every variant outputs one probability row over the three labels per input.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CategoryLabel;

mod checkpoint;
mod classifier;
mod cnn;
mod encoder;
mod lstm;
mod params;
mod tokenizer;

pub use checkpoint::{
    load_weights, write_random_checkpoint, CheckpointFiles, CheckpointName, CheckpointStore,
    CHECKPOINT_DIR_ENV,
};
pub use classifier::{
    build_cnn, build_lstm, build_transformer, encode_for_transformer, Classifier, EncodedTransformerBatch,
    ModelInput, Prediction,
};
pub use encoder::{EncoderArchitecture, EncoderConfig};
pub use params::{Init, ParamStore};
pub use tokenizer::{SpecialIds, SubwordTokenizer, WordPiece};

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model spec does not match the requested builder: expected {expected}, got {found}")]
    SpecMismatch { expected: ModelVariant, found: ModelVariant },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint {name} is unavailable at {}: {reason}. {hint}", .path.display())]
    CheckpointUnavailable {
        name: String,
        path: PathBuf,
        reason: String,
        hint: String,
    },
    #[error("tokenizer error: {0}")]
    Tokenizer(String),
    #[error("invalid model artifact {}: {reason}", .path.display())]
    BadArtifact { path: PathBuf, reason: String },
    #[error(transparent)]
    Backend(#[from] candle_core::Error),
    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Cnn,
    Lstm,
    TransformerFineTune,
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVariant::Cnn => "cnn",
            ModelVariant::Lstm => "lstm",
            ModelVariant::TransformerFineTune => "transformer_fine_tune",
        })
    }
}

impl FromStr for ModelVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ModelVariant::Cnn),
            "lstm" => Ok(ModelVariant::Lstm),
            "transformer" | "transformer_fine_tune" | "transformer-fine-tune" => {
                Ok(ModelVariant::TransformerFineTune)
            }
            other => Err(format!("unknown model variant {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    #[default]
    GlobalMax,
    GlobalAverage,
}

/// Word-vector input shared by the CNN and LSTM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordEmbeddingSpec {
    pub dim: usize,
    /// Textual word-vector file; `None` means corpus-local vectors are trained.
    #[serde(default)]
    pub vectors: Option<String>,
    #[serde(default = "default_true")]
    pub trainable: bool,
}

fn default_true() -> bool {
    true
}

impl Default for WordEmbeddingSpec {
    fn default() -> Self {
        WordEmbeddingSpec {
            dim: 100,
            vectors: None,
            trainable: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnSpec {
    pub filters: usize,
    pub kernel_width: usize,
    #[serde(default)]
    pub pool: PoolMode,
    /// Padded sequence length; `None` until resolved from training data.
    #[serde(default)]
    pub max_len: Option<usize>,
    #[serde(default)]
    pub embedding: WordEmbeddingSpec,
}

impl Default for CnnSpec {
    fn default() -> Self {
        CnnSpec {
            filters: 128,
            kernel_width: 5,
            pool: PoolMode::GlobalMax,
            max_len: None,
            embedding: WordEmbeddingSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmSpec {
    pub hidden_units: usize,
    #[serde(default)]
    pub max_len: Option<usize>,
    #[serde(default)]
    pub embedding: WordEmbeddingSpec,
}

impl Default for LstmSpec {
    fn default() -> Self {
        LstmSpec {
            hidden_units: 128,
            max_len: None,
            embedding: WordEmbeddingSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerSpec {
    pub checkpoint: CheckpointName,
    pub max_tokens: usize,
}

impl TransformerSpec {
    pub fn new(checkpoint: CheckpointName) -> Self {
        TransformerSpec {
            checkpoint,
            max_tokens: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Architecture {
    Cnn(CnnSpec),
    Lstm(LstmSpec),
    TransformerFineTune(TransformerSpec),
}

/// Declarative description of one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub architecture: Architecture,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn cnn(spec: CnnSpec) -> Self {
        ModelSpec {
            architecture: Architecture::Cnn(spec),
            num_classes: NUM_CLASSES,
        }
    }

    pub fn lstm(spec: LstmSpec) -> Self {
        ModelSpec {
            architecture: Architecture::Lstm(spec),
            num_classes: NUM_CLASSES,
        }
    }

    pub fn transformer(spec: TransformerSpec) -> Self {
        ModelSpec {
            architecture: Architecture::TransformerFineTune(spec),
            num_classes: NUM_CLASSES,
        }
    }

    pub fn variant(&self) -> ModelVariant {
        match self.architecture {
            Architecture::Cnn(_) => ModelVariant::Cnn,
            Architecture::Lstm(_) => ModelVariant::Lstm,
            Architecture::TransformerFineTune(_) => ModelVariant::TransformerFineTune,
        }
    }

    /// Row name used in result tables.
    pub fn display_name(&self) -> String {
        match &self.architecture {
            Architecture::Cnn(_) => "CNN(GloVe)".into(),
            Architecture::Lstm(_) => "LSTM(GloVe)".into(),
            Architecture::TransformerFineTune(t) => t.checkpoint.display_name().into(),
        }
    }

    pub fn word_embedding(&self) -> Option<&WordEmbeddingSpec> {
        match &self.architecture {
            Architecture::Cnn(c) => Some(&c.embedding),
            Architecture::Lstm(l) => Some(&l.embedding),
            Architecture::TransformerFineTune(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::InvalidSpec(m.to_string()));
        if self.num_classes != NUM_CLASSES {
            return bad("num_classes must be 3");
        }
        match &self.architecture {
            Architecture::Cnn(c) => {
                if c.filters == 0 || c.kernel_width == 0 {
                    return bad("cnn filters and kernel_width must be ≥ 1");
                }
                if c.embedding.dim == 0 || c.max_len == Some(0) {
                    return bad("embedding dim and max_len must be ≥ 1");
                }
            }
            Architecture::Lstm(l) => {
                if l.hidden_units == 0 {
                    return bad("lstm hidden_units must be ≥ 1");
                }
                if l.embedding.dim == 0 || l.max_len == Some(0) {
                    return bad("embedding dim and max_len must be ≥ 1");
                }
            }
            Architecture::TransformerFineTune(t) => {
                if t.max_tokens < 2 {
                    return bad("transformer max_tokens must be ≥ 2");
                }
            }
        }
        Ok(())
    }
}

/// Index of the largest entry; ties go to the earlier label.
pub fn argmax_label(row: &[f64; 3]) -> CategoryLabel {
    let mut best = 0;
    for i in 1..3 {
        if row[i] > row[best] {
            best = i;
        }
    }
    CategoryLabel::ALL[best]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_follow_label_order() {
        assert_eq!(argmax_label(&[0.2, 0.5, 0.3]), CategoryLabel::Transphobic);
        let third = 1.0 / 3.0;
        assert_eq!(argmax_label(&[third, third, third]), CategoryLabel::Homophobic);
        assert_eq!(argmax_label(&[0.1, 0.45, 0.45]), CategoryLabel::Transphobic);
    }

    #[test]
    fn spec_json_is_tagged() {
        let s = ModelSpec::cnn(CnnSpec::default());
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"variant\":\"cnn\""), "{j}");
        let back: ModelSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        let t = ModelSpec::transformer(TransformerSpec::new(CheckpointName::IndicBert));
        let j = serde_json::to_string(&t).unwrap();
        assert!(j.contains("ai4bharat/indic-bert"), "{j}");
        assert_eq!(t.display_name(), "IndicBERT");
    }

    #[test]
    fn validation() {
        let mut c = CnnSpec::default();
        c.filters = 0;
        assert!(ModelSpec::cnn(c).validate().is_err());
        let mut s = ModelSpec::lstm(LstmSpec::default());
        assert!(s.validate().is_ok());
        s.num_classes = 2;
        assert!(s.validate().is_err());
    }
}
