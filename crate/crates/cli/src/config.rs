//! Run configuration files (TOML).
//!
//! ```toml
//! language = "malayalam"
//! data = "prepared/malayalam"   # prepared split directory or a labeled TSV
//! out = "runs/ml-indicbert"
//! seed = 42
//!
//! [split]                       # only used when `data` is a TSV
//! ratios = [0.8, 0.1, 0.1]
//! stratified = true
//!
//! [model]
//! variant = "transformer_fine_tune"
//! checkpoint = "ai4bharat/indic-bert"
//!
//! [train]                       # overrides of the per-family defaults
//! epochs = 5
//! ```
//!
//! `[model]` keys override the defaults of the chosen variant: `filters`,
//! `kernel_width`, `pool`, `max_len` and `[model.embedding]` (`dim`,
//! `vectors`, `trainable`) for CNN; `hidden_units`, `max_len` and
//! `[model.embedding]` for LSTM; `checkpoint` and `max_tokens` for
//! transformers. Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use htdetect_core::corpus::{validate_ratios, DEFAULT_SPLIT_RATIOS};
use htdetect_core::models::{
    CheckpointName, CnnSpec, LstmSpec, ModelSpec, ModelVariant, TransformerSpec,
};
use htdetect_core::trainer::{default_config, TrainConfig};
use htdetect_core::Language;
use serde::Deserialize;
use serde_json::Value;

use crate::failure::{CliResult, Failure};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    #[serde(default = "yes")]
    pub stratified: bool,
}

fn default_ratios() -> [f64; 3] {
    DEFAULT_SPLIT_RATIOS
}

fn yes() -> bool {
    true
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratios: DEFAULT_SPLIT_RATIOS,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    language: Option<Language>,
    data: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    #[serde(default)]
    split: SplitSection,
    model: toml::Table,
    #[serde(default)]
    train: toml::Table,
}

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub language: Option<Language>,
    pub data: PathBuf,
    pub out: Option<PathBuf>,
    pub split: SplitSection,
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// Directory relative paths inside the config resolve against.
    pub base_dir: PathBuf,
    /// SHA-256 of the config file bytes.
    pub hash: String,
}

/// Parses and validates a config file. `seed` (from the command line) takes
/// precedence over the file's `seed` and `[train] seed`.
pub fn load(path: &Path, seed: Option<u64>) -> CliResult<RunConfig> {
    let text = crate::failure::read_to_string(path)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse(&text, &base_dir, seed).map_err(|f| f.context(format!("invalid config {}", path.display())))
}

pub fn parse(text: &str, base_dir: &Path, seed: Option<u64>) -> CliResult<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(Failure::validation)?;
    validate_ratios(raw.split.ratios)?;
    let model = model_spec(&raw.model)?;
    model.validate()?;
    let mut train_table = raw.train.clone();
    let seed = seed
        .or(raw.seed)
        .or_else(|| train_table.get("seed").and_then(toml::Value::as_integer).map(|s| s as u64));
    train_table.remove("seed");
    let mut train: TrainConfig = merge_into(&default_config(model.variant()), &train_table, "train")?;
    if let Some(s) = seed {
        train.seed = s;
    }
    train.validate()?;
    Ok(RunConfig {
        language: raw.language,
        data: base_dir.join(&raw.data),
        out: raw.out.map(|o| base_dir.join(o)),
        split: raw.split,
        model,
        train,
        base_dir: base_dir.to_path_buf(),
        hash: htdetect_core::artifact::sha256_hex(text.as_bytes()),
    })
}

fn model_spec(table: &toml::Table) -> CliResult<ModelSpec> {
    let mut table = table.clone();
    let variant: ModelVariant = table
        .get("variant")
        .and_then(toml::Value::as_str)
        .ok_or_else(|| Failure::validation(anyhow::anyhow!("[model] needs a `variant` (cnn, lstm or transformer_fine_tune)")))?
        .parse()
        .map_err(|e: String| Failure::validation(anyhow::anyhow!(e)))?;
    table.insert("variant".into(), toml::Value::String(variant.to_string()));
    let defaults = match variant {
        ModelVariant::Cnn => ModelSpec::cnn(CnnSpec::default()),
        ModelVariant::Lstm => ModelSpec::lstm(LstmSpec::default()),
        ModelVariant::TransformerFineTune => {
            let name: CheckpointName = table
                .get("checkpoint")
                .and_then(toml::Value::as_str)
                .ok_or_else(|| Failure::validation(anyhow::anyhow!("transformer models need a `checkpoint`")))?
                .parse()
                .map_err(|e: String| Failure::validation(anyhow::anyhow!(e)))?;
            table.insert("checkpoint".into(), toml::Value::String(name.hub_id().into()));
            ModelSpec::transformer(TransformerSpec::new(name))
        }
    };
    merge_into(&defaults, &table, "model")
}

/// Deep-merges `overrides` over the serialized `defaults`.
fn merge_into<T>(defaults: &T, overrides: &toml::Table, section: &str) -> CliResult<T>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let mut base = serde_json::to_value(defaults).expect("defaults serialize");
    let over = serde_json::to_value(overrides).map_err(Failure::validation)?;
    merge(&mut base, over);
    serde_json::from_value(base)
        .map_err(|e| Failure::validation(anyhow::anyhow!("[{section}]: {e}")))
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use htdetect_core::models::Architecture;

    #[test]
    fn transformer_defaults_follow_the_family() {
        let c = parse(
            "data = \"d\"\n[model]\nvariant = \"transformer\"\ncheckpoint = \"IndicBERT\"\n",
            Path::new("/cfg"),
            None,
        )
        .unwrap();
        assert_eq!((c.train.epochs, c.train.batch_size, c.train.learning_rate), (5, 32, 3e-5));
        assert_eq!(c.model.display_name(), "IndicBERT");
        assert_eq!(c.data, Path::new("/cfg/d"));
    }

    #[test]
    fn overrides_merge_into_defaults() {
        let c = parse(
            "data = \"d\"\nseed = 5\n[model]\nvariant = \"cnn\"\nfilters = 7\n[model.embedding]\nvectors = \"v.txt\"\n[train]\nepochs = 3\n",
            Path::new(""),
            Some(11),
        )
        .unwrap();
        let Architecture::Cnn(cnn) = &c.model.architecture else { panic!() };
        assert_eq!((cnn.filters, cnn.kernel_width, cnn.embedding.dim), (7, 5, 100));
        assert_eq!(cnn.embedding.vectors.as_deref(), Some("v.txt"));
        assert_eq!((c.train.epochs, c.train.batch_size, c.train.seed), (3, 32, 11));
    }

    #[test]
    fn invalid_values_are_validation_errors() {
        for bad in [
            "data = \"d\"\n[split]\nratios = [0.5, 0.5, 0.5]\n[model]\nvariant = \"cnn\"\n",
            "data = \"d\"\n[model]\nvariant = \"cnn\"\nfilterz = 3\n",
            "data = \"d\"\n[model]\nvariant = \"lstm\"\n[train]\nepochs = 0\n",
            "data = \"d\"\n[model]\nvariant = \"svm\"\n",
            "data = \"d\"\n[model]\nvariant = \"transformer\"\n",
        ] {
            let err = parse(bad, Path::new(""), None).unwrap_err();
            assert_eq!(err.kind, crate::failure::Kind::Validation, "{bad}");
        }
    }

    #[test]
    fn shipped_reproduction_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../reproduction/configs");
        let mut n = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            let c = load(&path, None).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(c.train.seed, 42);
            assert!(c.out.is_some() && c.language.is_some());
            n += 1;
        }
        assert_eq!(n, 8);
    }
}
