use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderArchitecture, EncoderConfig, TransformerEncoder};
use super::params::ParamStore;
use super::{ModelError, Result};

/// Environment variable naming the local checkpoint root.
pub const CHECKPOINT_DIR_ENV: &str = "HTDETECT_CHECKPOINT_DIR";

/// The two supported pretrained encoders, named by their hub ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckpointName {
    #[serde(rename = "bert-base-multilingual-cased")]
    MBert,
    #[serde(rename = "ai4bharat/indic-bert")]
    IndicBert,
}

impl CheckpointName {
    pub const ALL: [CheckpointName; 2] = [CheckpointName::MBert, CheckpointName::IndicBert];

    pub fn hub_id(self) -> &'static str {
        match self {
            CheckpointName::MBert => "bert-base-multilingual-cased",
            CheckpointName::IndicBert => "ai4bharat/indic-bert",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            CheckpointName::MBert => "mBERT",
            CheckpointName::IndicBert => "IndicBERT",
        }
    }

    pub fn architecture(self) -> EncoderArchitecture {
        match self {
            CheckpointName::MBert => EncoderArchitecture::Bert,
            CheckpointName::IndicBert => EncoderArchitecture::Albert,
        }
    }

    /// Published configuration of the full-size checkpoint.
    pub fn reference_config(self) -> EncoderConfig {
        let base = EncoderConfig {
            architecture: self.architecture(),
            vocab_size: 119_547,
            hidden_size: 768,
            num_hidden_layers: 12,
            num_attention_heads: 12,
            intermediate_size: 3072,
            hidden_act: "gelu".into(),
            hidden_dropout_prob: 0.1,
            attention_probs_dropout_prob: 0.1,
            max_position_embeddings: 512,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
            initializer_range: 0.02,
            embedding_size: None,
            num_hidden_groups: 1,
            inner_group_num: 1,
        };
        match self {
            CheckpointName::MBert => base,
            CheckpointName::IndicBert => EncoderConfig {
                vocab_size: 200_000,
                embedding_size: Some(128),
                hidden_dropout_prob: 0.0,
                attention_probs_dropout_prob: 0.0,
                ..base
            },
        }
    }
}

impl fmt::Display for CheckpointName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.hub_id())
    }
}

impl FromStr for CheckpointName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match norm.as_str() {
            "mbert" | "bertbasemultilingualcased" => Ok(CheckpointName::MBert),
            "indicbert" | "ai4bharatindicbert" => Ok(CheckpointName::IndicBert),
            _ => Err(format!(
                "unknown checkpoint {s:?}; expected bert-base-multilingual-cased or ai4bharat/indic-bert"
            )),
        }
    }
}

/// Files making up one local checkpoint directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointFiles {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub tokenizer: PathBuf,
    pub weights: PathBuf,
}

impl CheckpointFiles {
    /// Locates config, tokenizer and weights inside `dir`.
    pub fn in_dir(dir: &Path) -> std::result::Result<Self, String> {
        let first = |names: &[&str]| names.iter().map(|n| dir.join(n)).find(|p| p.is_file());
        let config = first(&["config.json"]).ok_or("config.json is missing")?;
        let tokenizer =
            first(&["tokenizer.json", "vocab.txt"]).ok_or("neither tokenizer.json nor vocab.txt is present")?;
        let weights = first(&["model.safetensors", "pytorch_model.bin"])
            .ok_or("neither model.safetensors nor pytorch_model.bin is present")?;
        Ok(CheckpointFiles {
            dir: dir.to_path_buf(),
            config,
            tokenizer,
            weights,
        })
    }

    pub fn read_config(&self) -> Result<EncoderConfig> {
        let text = std::fs::read_to_string(&self.config).map_err(|source| ModelError::Io {
            path: self.config.clone(),
            source,
        })?;
        let cfg: EncoderConfig = serde_json::from_str(&text).map_err(|e| ModelError::BadArtifact {
            path: self.config.clone(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Local directory of pretrained checkpoints, laid out as `<root>/<hub id>/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointStore {
    root: PathBuf,
}

impl CheckpointStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CheckpointStore { root: root.into() }
    }

    /// `$HTDETECT_CHECKPOINT_DIR`, else `~/.cache/htdetect/checkpoints`.
    pub fn from_env() -> Self {
        if let Some(dir) = std::env::var_os(CHECKPOINT_DIR_ENV).filter(|d| !d.is_empty()) {
            return Self::new(dir);
        }
        let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        Self::new(home.join(".cache").join("htdetect").join("checkpoints"))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir_for(&self, name: CheckpointName) -> PathBuf {
        self.root.join(name.hub_id())
    }

    pub fn resolve(&self, name: CheckpointName) -> Result<CheckpointFiles> {
        let dir = self.dir_for(name);
        CheckpointFiles::in_dir(&dir).map_err(|reason| ModelError::CheckpointUnavailable {
            name: name.hub_id().to_string(),
            path: dir.clone(),
            reason,
            hint: format!(
                "download the Hugging Face repository {} (config.json, vocab.txt or tokenizer.json, \
                 model.safetensors or pytorch_model.bin) into {} or point {CHECKPOINT_DIR_ENV} at a \
                 directory containing it",
                name.hub_id(),
                dir.display()
            ),
        })
    }
}

/// Reads encoder weights as f32 under the names the encoder expects.
///
/// Legacy `gamma`/`beta` suffixes become `weight`/`bias`, and bare
/// `embeddings.*`/`encoder.*` keys gain the architecture prefix.
pub fn load_weights(path: &Path, arch: EncoderArchitecture) -> Result<HashMap<String, Tensor>> {
    let bad = |reason: String| ModelError::BadArtifact {
        path: path.to_path_buf(),
        reason,
    };
    let raw: Vec<(String, Tensor)> = if path.extension().is_some_and(|e| e == "safetensors") {
        candle_core::safetensors::load(path, &Device::Cpu)
            .map_err(|e| bad(e.to_string()))?
            .into_iter()
            .collect()
    } else {
        candle_core::pickle::read_all(path).map_err(|e| bad(e.to_string()))?
    };
    let prefix = arch.prefix();
    let mut out = HashMap::with_capacity(raw.len());
    for (key, tensor) in raw {
        let mut key = key;
        if let Some(stem) = key.strip_suffix(".gamma") {
            key = format!("{stem}.weight");
        } else if let Some(stem) = key.strip_suffix(".beta") {
            key = format!("{stem}.bias");
        }
        if key.starts_with("embeddings.") || key.starts_with("encoder.") {
            key = format!("{prefix}.{key}");
        }
        out.insert(key, tensor.to_dtype(DType::F32)?);
    }
    Ok(out)
}

/// Writes a randomly initialized checkpoint with the given configuration and
/// WordPiece vocabulary, in the same layout as a downloaded one.
pub fn write_random_checkpoint(
    dir: &Path,
    cfg: &EncoderConfig,
    vocab: &[String],
    seed: u64,
) -> Result<CheckpointFiles> {
    if vocab.len() != cfg.vocab_size {
        return Err(ModelError::InvalidSpec(format!(
            "vocabulary has {} tokens but the config declares {}",
            vocab.len(),
            cfg.vocab_size
        )));
    }
    let io = |path: &Path, source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut params = ParamStore::new(seed);
    TransformerEncoder::new(cfg, &mut params)?;
    params.save(&dir.join("model.safetensors"))?;
    let config = serde_json::to_string_pretty(cfg).expect("config serializes");
    crate::artifact::atomic_write(&dir.join("config.json"), config.as_bytes()).map_err(|e| io(dir, e))?;
    let mut text = vocab.join("\n");
    text.push('\n');
    crate::artifact::atomic_write(&dir.join("vocab.txt"), text.as_bytes()).map_err(|e| io(dir, e))?;
    CheckpointFiles::in_dir(dir).map_err(|reason| ModelError::BadArtifact {
        path: dir.to_path_buf(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_leniently() {
        for s in ["mbert", "mBERT", "bert-base-multilingual-cased"] {
            assert_eq!(s.parse::<CheckpointName>().unwrap(), CheckpointName::MBert);
        }
        for s in ["IndicBERT", "indic-bert", "ai4bharat/indic-bert"] {
            assert_eq!(s.parse::<CheckpointName>().unwrap(), CheckpointName::IndicBert);
        }
        assert!("roberta".parse::<CheckpointName>().is_err());
    }

    #[test]
    fn missing_checkpoint_explains_remedy() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CheckpointStore::new(tmp.path());
        let err = store.resolve(CheckpointName::IndicBert).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ModelError::CheckpointUnavailable { .. }));
        assert!(msg.contains("ai4bharat/indic-bert") && msg.contains(CHECKPOINT_DIR_ENV), "{msg}");
    }

    #[test]
    fn reference_configs_are_valid() {
        for name in CheckpointName::ALL {
            name.reference_config().validate().unwrap();
        }
        assert_eq!(CheckpointName::IndicBert.reference_config().embedding_width(), 128);
    }
}
