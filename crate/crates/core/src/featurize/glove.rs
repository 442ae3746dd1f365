//! Corpus-local GloVe vectors.
//!
//! Used when no pretrained vectors file is configured: builds a symmetric
//! co-occurrence matrix with `1/distance` weighting and fits
//! `w_i·w̃_j + b_i + b̃_j ≈ log X_ij` with the weighting
//! `f(x) = min(1, (x / x_max)^alpha)`, optimised by AdaGrad. The exported
//! vector of a word is `w + w̃`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{io_err, Result, Vocabulary};
use crate::artifact::atomic_write;
use crate::textprep::CleanText;

#[derive(Debug, Clone, PartialEq)]
pub struct GloveConfig {
    pub dim: usize,
    pub window: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig {
            dim: 100,
            window: 10,
            x_max: 100.0,
            alpha: 0.75,
            epochs: 25,
            learning_rate: 0.05,
        }
    }
}

/// Trained vectors for the real tokens of a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    pub dim: usize,
    pub vectors: Vec<(String, Vec<f32>)>,
    /// Weighted least-squares cost after each epoch.
    pub cost_history: Vec<f64>,
}

impl WordVectors {
    /// Textual word-vector format: one `token x1 … xD` line per word.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (tok, v) in &self.vectors {
            s.push_str(tok);
            for x in v {
                write!(s, " {x}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_text().as_bytes()).map_err(io_err(path))
    }
}

fn cooccurrences(texts: &[CleanText], vocab: &Vocabulary, window: usize) -> Vec<(usize, usize, f64)> {
    let mut counts: HashMap<(usize, usize), f64> = HashMap::new();
    for text in texts {
        // OOV tokens break nothing but contribute no pairs
        let ids: Vec<Option<usize>> = text
            .tokens()
            .map(|t| vocab.id(t).map(|id| id as usize - 2))
            .collect();
        for (i, a) in ids.iter().enumerate() {
            let Some(a) = *a else { continue };
            for d in 1..=window {
                let Some(Some(b)) = ids.get(i + d) else { continue };
                let w = 1.0 / d as f64;
                *counts.entry((a, *b)).or_default() += w;
                *counts.entry((*b, a)).or_default() += w;
            }
        }
    }
    let mut out: Vec<_> = counts.into_iter().map(|((i, j), x)| (i, j, x)).collect();
    out.sort_by_key(|&(i, j, _)| (i, j));
    out
}

/// Fits vectors for every real token in `vocab` from `texts`.
pub fn train_glove(texts: &[CleanText], vocab: &Vocabulary, cfg: &GloveConfig, seed: u64) -> WordVectors {
    let n = vocab.len().saturating_sub(2);
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.5 / d as f64;
    let mut init = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-scale..scale)).collect() };
    let mut w = init(n * d);
    let mut wc = init(n * d);
    let mut b = init(n);
    let mut bc = init(n);
    let mut gw = vec![1.0f64; n * d];
    let mut gwc = vec![1.0f64; n * d];
    let mut gb = vec![1.0f64; n];
    let mut gbc = vec![1.0f64; n];

    let mut pairs = cooccurrences(texts, vocab, cfg.window);
    let mut cost_history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        let mut cost = 0.0;
        for &(i, j, x) in &pairs {
            let (wi, wj) = (i * d, j * d);
            let dot: f64 = (0..d).map(|k| w[wi + k] * wc[wj + k]).sum();
            let diff = dot + b[i] + bc[j] - x.ln();
            let weight = (x / cfg.x_max).powf(cfg.alpha).min(1.0);
            let fdiff = weight * diff;
            cost += 0.5 * fdiff * diff;
            let step = cfg.learning_rate * fdiff;
            for k in 0..d {
                let g1 = fdiff * wc[wj + k];
                let g2 = fdiff * w[wi + k];
                w[wi + k] -= cfg.learning_rate * g1 / gw[wi + k].sqrt();
                wc[wj + k] -= cfg.learning_rate * g2 / gwc[wj + k].sqrt();
                gw[wi + k] += g1 * g1;
                gwc[wj + k] += g2 * g2;
            }
            b[i] -= step / gb[i].sqrt();
            bc[j] -= step / gbc[j].sqrt();
            gb[i] += fdiff * fdiff;
            gbc[j] += fdiff * fdiff;
        }
        cost_history.push(if pairs.is_empty() { 0.0 } else { cost / pairs.len() as f64 });
    }

    let vectors = vocab
        .real_tokens()
        .map(|(id, tok)| {
            let r = (id as usize - 2) * d;
            let v = (0..d).map(|k| (w[r + k] + wc[r + k]) as f32).collect();
            (tok.to_string(), v)
        })
        .collect();
    WordVectors {
        dim: d,
        vectors,
        cost_history,
    }
}
