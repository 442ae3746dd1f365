use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::{ModelError, Result};

/// Ids of the marker tokens wrapped around every encoded comment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub cls: u32,
    pub sep: u32,
    pub pad: u32,
}

/// Cased WordPiece over a `vocab.txt` (one token per line, id = line index).
///
/// Pre-tokenization splits on whitespace and isolates punctuation; each word
/// is then split greedily into the longest vocabulary pieces, continuation
/// pieces carrying the `##` prefix. Words with no complete segmentation map
/// to `[UNK]`.
#[derive(Debug, Clone)]
pub struct WordPiece {
    vocab: HashMap<String, u32>,
    tokens: Vec<String>,
    unk: u32,
    max_word_chars: usize,
}

impl WordPiece {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let vocab: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let unk = *vocab
            .get("[UNK]")
            .ok_or_else(|| ModelError::Tokenizer("vocabulary has no [UNK] token".into()))?;
        Ok(WordPiece {
            vocab,
            tokens,
            unk,
            max_word_chars: 100,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.vocab.get(token).copied()
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in pre_tokenize(text) {
            self.encode_word(&word, &mut out);
        }
        out
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > self.max_word_chars {
            out.push(self.unk);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if let Some(&id) = self.vocab.get(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk);
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

fn pre_tokenize(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in text.split_whitespace() {
        let mut cur = String::new();
        for c in chunk.chars() {
            if crate::textprep::is_punctuation(c) || c.is_ascii_punctuation() {
                if !cur.is_empty() {
                    words.push(std::mem::take(&mut cur));
                }
                words.push(c.to_string());
            } else if !c.is_control() {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            words.push(cur);
        }
    }
    words
}

enum Backend {
    WordPiece(WordPiece),
    Hf(Box<tokenizers::Tokenizer>),
}

/// Subword tokenizer of a pretrained checkpoint. Loads `tokenizer.json`
/// when present, otherwise a WordPiece `vocab.txt`.
pub struct SubwordTokenizer {
    backend: Backend,
    special: SpecialIds,
    source: PathBuf,
}

impl std::fmt::Debug for SubwordTokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubwordTokenizer")
            .field("source", &self.source)
            .field("special", &self.special)
            .finish()
    }
}

impl SubwordTokenizer {
    pub fn from_wordpiece(wp: WordPiece) -> Result<Self> {
        let special = special_ids(|t| wp.token_id(t))?;
        Ok(SubwordTokenizer {
            backend: Backend::WordPiece(wp),
            special,
            source: PathBuf::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let is_json = path.extension().is_some_and(|e| e == "json");
        let mut tok = if is_json {
            let hf = tokenizers::Tokenizer::from_file(path)
                .map_err(|e| ModelError::Tokenizer(format!("{}: {e}", path.display())))?;
            let special = special_ids(|t| hf.token_to_id(t))?;
            SubwordTokenizer {
                backend: Backend::Hf(Box::new(hf)),
                special,
                source: PathBuf::new(),
            }
        } else {
            Self::from_wordpiece(WordPiece::load(path)?)?
        };
        tok.source = path.to_path_buf();
        Ok(tok)
    }

    /// File the tokenizer was loaded from (empty when built in memory).
    pub fn source(&self) -> &Path {
        &self.source
    }

    pub fn special(&self) -> SpecialIds {
        self.special
    }

    pub fn vocab_size(&self) -> usize {
        match &self.backend {
            Backend::WordPiece(wp) => wp.vocab_size(),
            Backend::Hf(hf) => hf.get_vocab_size(true),
        }
    }

    /// Subword ids without marker tokens.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        match &self.backend {
            Backend::WordPiece(wp) => Ok(wp.encode(text)),
            Backend::Hf(hf) => hf
                .encode(text, false)
                .map(|e| e.get_ids().to_vec())
                .map_err(|e| ModelError::Tokenizer(e.to_string())),
        }
    }
}

/// Accepts both BERT (`[CLS]`) and ALBERT/SentencePiece spellings.
fn special_ids(lookup: impl Fn(&str) -> Option<u32>) -> Result<SpecialIds> {
    let find = |names: &[&str]| -> Result<u32> {
        names
            .iter()
            .find_map(|n| lookup(n))
            .ok_or_else(|| ModelError::Tokenizer(format!("tokenizer lacks a {} token", names[0])))
    };
    Ok(SpecialIds {
        cls: find(&["[CLS]", "<s>"])?,
        sep: find(&["[SEP]", "</s>"])?,
        pad: find(&["[PAD]", "<pad>"])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp() -> WordPiece {
        let toks = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "un", "##aff", "##able", "hello", "!", "ന", "##ല്ല"];
        WordPiece::from_tokens(toks.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn greedy_longest_match() {
        let w = wp();
        assert_eq!(w.encode("unaffable"), vec![4, 5, 6]);
        assert_eq!(w.encode("hello!"), vec![7, 8]);
        assert_eq!(w.encode("നല്ല"), vec![9, 10]);
        assert_eq!(w.encode("unknown hello"), vec![1, 7]);
        assert_eq!(w.encode("Hello"), vec![1], "cased vocabulary");
    }

    #[test]
    fn special_tokens_resolve() {
        let t = SubwordTokenizer::from_wordpiece(wp()).unwrap();
        assert_eq!(t.special(), SpecialIds { cls: 2, sep: 3, pad: 0 });
        assert!(WordPiece::from_tokens(vec!["a".into()]).is_err());
    }
}
