use std::collections::HashMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{tokenize, RawDocument};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index map. Indices 0 and 1 are reserved for padding and unknown
/// tokens; the tokenizer never produces their surface forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    min_count: u64,
}

/// Counts tokens over `docs` and keeps those seen at least `min_count` times,
/// ordered by descending count then ascending token.
pub fn build_vocab(docs: &[RawDocument], min_count: u64) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut freq: HashMap<String, u64> = HashMap::new();
    for d in docs {
        for t in tokenize(&d.text) {
            *freq.entry(t).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, u64)> = freq.into_iter().filter(|(_, c)| *c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_entries(kept, min_count))
}

impl Vocabulary {
    fn from_entries(entries: Vec<(String, u64)>, min_count: u64) -> Self {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut counts = vec![0, 0];
        for (t, c) in entries {
            tokens.push(t);
            counts.push(c);
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            counts,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Index of `token`, falling back to [`UNK`].
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    /// Corpus tokens (everything except the two reserved entries).
    pub fn corpus_tokens(&self) -> impl Iterator<Item = (usize, &str)> {
        self.tokens.iter().enumerate().skip(2).map(|(i, t)| (i, t.as_str()))
    }

    /// `token<TAB>index<TAB>count` lines, reserved entries included.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, (t, c)) in self.tokens.iter().zip(&self.counts).enumerate() {
            let _ = writeln!(out, "{t}\t{i}\t{c}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::format(format!("vocabulary line {}", lineno + 1), m);
            let mut fields = line.split('\t');
            let (Some(tok), Some(idx), Some(cnt), None) = (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(bad("expected token<TAB>index<TAB>count"));
            };
            let idx: usize = idx.parse().map_err(|_| bad("bad index"))?;
            let cnt: u64 = cnt.parse().map_err(|_| bad("bad count"))?;
            if idx != lineno {
                return Err(bad("indices must be consecutive from 0"));
            }
            entries.push((tok.to_string(), cnt));
        }
        if entries.len() < 2 || entries[0].0 != PAD_TOKEN || entries[1].0 != UNK_TOKEN {
            return Err(Error::format("vocabulary", "missing reserved entries"));
        }
        let corpus: Vec<(String, u64)> = entries.split_off(2);
        let min_count = corpus.iter().map(|(_, c)| *c).min().unwrap_or(0);
        let vocab = Self::from_entries(corpus, min_count);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::format("vocabulary", "duplicate tokens"));
        }
        Ok(vocab)
    }

    /// SHA-256 of the TSV form, recorded in checkpoints.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_tsv().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
