//! Word-level features for the CNN and LSTM classifiers: vocabulary,
//! id sequences, zero-padded batches and the pretrained embedding matrix.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::artifact::atomic_write;
use crate::corpus::CategoryLabel;
use crate::textprep::CleanText;

pub mod glove;

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";

pub const DEFAULT_MAX_VOCAB: usize = 20_000;
pub const MAX_SEQUENCE_CAP: usize = 128;
/// Half-width of the uniform range used for tokens missing from the vectors file.
pub const OOV_INIT_RANGE: f32 = 0.25;

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("vectors file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}: expected {expected} vector components, found {found}")]
    DimensionMismatch {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = FeaturizeError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FeaturizeError + '_ {
    move |source| FeaturizeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Token ↔ id mapping. Id 0 is padding and id 1 is the out-of-vocabulary
/// bucket; real tokens occupy `2..len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::specials_only()
    }
}

impl Vocabulary {
    fn specials_only() -> Self {
        Vocabulary {
            ids: HashMap::new(),
            tokens: vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()],
        }
    }

    /// Builds a vocabulary from real tokens listed in id order (ids from 2).
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::specials_only();
        for t in tokens {
            let t = t.into();
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(FeaturizeError::InvalidArgument(format!(
                    "vocabulary token {t:?} is empty or contains whitespace"
                )));
            }
            if v.ids.contains_key(&t) {
                return Err(FeaturizeError::InvalidArgument(format!("duplicate token {t:?}")));
            }
            v.ids.insert(t.clone(), v.tokens.len() as u32);
            v.tokens.push(t);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Real tokens with their ids, in id order.
    pub fn real_tokens(&self) -> impl Iterator<Item = (u32, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (i as u32, t.as_str()))
    }

    /// `token<TAB>id` lines, specials included.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            s.push_str(t);
            s.push('\t');
            s.push_str(&i.to_string());
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_tsv().as_bytes()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                FeaturizeError::MissingFile(path.to_path_buf())
            } else {
                io_err(path)(e)
            }
        })?;
        let parse_err = |line: usize, reason: String| FeaturizeError::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut rows = Vec::new();
        for (n, line) in raw.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err(n + 1, "expected token<TAB>id".into()))?;
            let id: usize = id
                .parse()
                .map_err(|_| parse_err(n + 1, format!("bad id {id:?}")))?;
            rows.push((id, tok.to_string()));
        }
        rows.sort_by_key(|(id, _)| *id);
        for (expected, (id, _)) in rows.iter().enumerate() {
            if *id != expected {
                return Err(parse_err(0, format!("ids are not contiguous (missing {expected})")));
            }
        }
        if rows.len() < 2 || rows[0].1 != PAD_TOKEN || rows[1].1 != OOV_TOKEN {
            return Err(parse_err(0, "ids 0 and 1 must be the padding and OOV tokens".into()));
        }
        Self::from_tokens(rows.into_iter().skip(2).map(|(_, t)| t))
    }
}

/// Counts whitespace tokens and keeps the `max_vocab - 2` most frequent,
/// ties broken by first occurrence.
pub fn build_vocabulary(texts: &[CleanText], max_vocab: usize) -> Result<Vocabulary> {
    if max_vocab < 3 {
        return Err(FeaturizeError::InvalidArgument(format!(
            "max_vocab must be at least 3, got {max_vocab}"
        )));
    }
    // token -> (count, first occurrence)
    let mut stats: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut position = 0usize;
    for text in texts {
        for tok in text.tokens() {
            stats.entry(tok).or_insert((0, position)).0 += 1;
            position += 1;
        }
    }
    let mut ranked: Vec<(&str, usize, usize)> =
        stats.into_iter().map(|(t, (c, f))| (t, c, f)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    Vocabulary::from_tokens(ranked.into_iter().take(max_vocab - 2).map(|(t, _, _)| t))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// Token count before any truncation.
    pub original_len: usize,
}

pub fn encode(text: &CleanText, vocab: &Vocabulary) -> TokenSequence {
    let ids: Vec<u32> = text
        .tokens()
        .map(|t| vocab.id(t).unwrap_or(OOV_ID))
        .collect();
    TokenSequence {
        original_len: ids.len(),
        ids,
    }
}

/// Row-major `rows × width` matrix of token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedBatch {
    pub ids: Vec<u32>,
    pub rows: usize,
    pub width: usize,
    pub labels: Option<Vec<CategoryLabel>>,
}

impl PaddedBatch {
    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.width..(i + 1) * self.width]
    }

    /// Number of ids before the trailing padding in row `i`.
    pub fn row_len(&self, i: usize) -> usize {
        self.row(i)
            .iter()
            .rposition(|&id| id != PAD_ID)
            .map_or(0, |p| p + 1)
    }

    pub fn with_labels(mut self, labels: Vec<CategoryLabel>) -> Self {
        assert_eq!(labels.len(), self.rows, "one label per row");
        self.labels = Some(labels);
        self
    }

    /// Rows `idx` (in that order) as a new batch.
    pub fn select(&self, idx: &[usize]) -> PaddedBatch {
        let mut ids = Vec::with_capacity(idx.len() * self.width);
        for &i in idx {
            ids.extend_from_slice(self.row(i));
        }
        PaddedBatch {
            ids,
            rows: idx.len(),
            width: self.width,
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Pads with trailing zeros to `width`, keeping the first `width` ids of
/// longer sequences.
pub fn pad_batch(seqs: &[TokenSequence], width: usize) -> Result<PaddedBatch> {
    if width == 0 {
        return Err(FeaturizeError::InvalidArgument("sequence width must be ≥ 1".into()));
    }
    let mut ids = vec![PAD_ID; seqs.len() * width];
    for (row, s) in ids.chunks_mut(width).zip(seqs) {
        let n = s.ids.len().min(width);
        row[..n].copy_from_slice(&s.ids[..n]);
    }
    Ok(PaddedBatch {
        ids,
        rows: seqs.len(),
        width,
        labels: None,
    })
}

/// 95th percentile (nearest rank) of sequence lengths, clamped to `[1, 128]`.
pub fn default_sequence_length(seqs: &[TokenSequence]) -> usize {
    if seqs.is_empty() {
        return 1;
    }
    let mut lens: Vec<usize> = seqs.iter().map(|s| s.original_len).collect();
    lens.sort_unstable();
    let rank = ((0.95 * lens.len() as f64).ceil() as usize).clamp(1, lens.len());
    lens[rank - 1].clamp(1, MAX_SEQUENCE_CAP)
}

/// `V × D` word-vector matrix aligned with a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub data: Vec<f32>,
    pub vocab_size: usize,
    pub dim: usize,
    /// Real vocabulary tokens that were found in the vectors file.
    pub matched: usize,
}

impl EmbeddingMatrix {
    pub fn row(&self, id: usize) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    /// Fraction of real vocabulary tokens with a pretrained vector.
    pub fn coverage(&self) -> f64 {
        let real = self.vocab_size.saturating_sub(2);
        if real == 0 {
            0.0
        } else {
            self.matched as f64 / real as f64
        }
    }

    /// Matrix built without any vectors file: padding row zero, every other
    /// row uniform in `[-0.25, 0.25]`.
    pub fn random(vocab: &Vocabulary, dim: usize, seed: u64) -> Self {
        Self::fill(vocab, dim, seed, &HashMap::new())
    }

    /// Matrix from in-memory vectors (e.g. corpus-local GloVe); tokens without
    /// a vector get random rows as in [`load_embeddings`].
    pub fn from_vectors(vocab: &Vocabulary, vectors: &glove::WordVectors, seed: u64) -> Self {
        let found: HashMap<String, Vec<f32>> = vectors.vectors.iter().cloned().collect();
        Self::fill(vocab, vectors.dim, seed, &found)
    }

    fn fill(vocab: &Vocabulary, dim: usize, seed: u64, found: &HashMap<String, Vec<f32>>) -> Self {
        let v = vocab.len();
        let mut data = vec![0f32; v * dim];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matched = 0;
        for id in 1..v {
            let row = &mut data[id * dim..(id + 1) * dim];
            let token = vocab.token(id as u32).unwrap_or_default();
            // the random draw happens for every row so a row's value does
            // not depend on which other tokens the file happened to contain
            let random: Vec<f32> = (0..dim)
                .map(|_| rng.gen_range(-OOV_INIT_RANGE..=OOV_INIT_RANGE))
                .collect();
            match found.get(token) {
                Some(vec) if id >= 2 => {
                    row.copy_from_slice(vec);
                    matched += 1;
                }
                _ => row.copy_from_slice(&random),
            }
        }
        EmbeddingMatrix {
            data,
            vocab_size: v,
            dim,
            matched,
        }
    }
}

/// Reads a textual word-vector file (`token x1 … xD` per line; an optional
/// `count dim` header line is skipped) and aligns it with `vocab`.
pub fn load_embeddings(
    vectors_path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    if dim == 0 {
        return Err(FeaturizeError::InvalidArgument("embedding dimension must be ≥ 1".into()));
    }
    let file = fs::File::open(vectors_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            FeaturizeError::MissingFile(vectors_path.to_path_buf())
        } else {
            io_err(vectors_path)(e)
        }
    })?;
    let mut found: HashMap<String, Vec<f32>> = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(vectors_path))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        if n == 0 && values.len() == 1 && token.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
            continue;
        }
        if values.len() != dim {
            return Err(FeaturizeError::DimensionMismatch {
                path: vectors_path.to_path_buf(),
                line: n + 1,
                expected: dim,
                found: values.len(),
            });
        }
        if vocab.id(token).is_none() || found.contains_key(token) {
            continue;
        }
        let vec = values
            .iter()
            .map(|v| v.parse::<f32>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f32>>>()
            .ok_or_else(|| FeaturizeError::Parse {
                path: vectors_path.to_path_buf(),
                line: n + 1,
                reason: "non-numeric or non-finite vector component".into(),
            })?;
        found.insert(token.to_string(), vec);
    }
    let emb = EmbeddingMatrix::fill(vocab, dim, seed, &found);
    log::info!(
        "word vectors: {}/{} vocabulary tokens covered ({:.1}%)",
        emb.matched,
        vocab.len().saturating_sub(2),
        100.0 * emb.coverage()
    );
    Ok(emb)
}
