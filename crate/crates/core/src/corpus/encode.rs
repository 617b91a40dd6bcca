use serde::{Deserialize, Serialize};

use super::{tokenize, LabelUniverse, RawDocument, Vocabulary, PAD};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Segmentation {
    /// Consecutive fixed-length token windows.
    #[default]
    Chunk,
    /// Sentence-final punctuation and blank lines.
    Rule,
}

impl std::str::FromStr for Segmentation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "chunk" => Ok(Segmentation::Chunk),
            "rule" => Ok(Segmentation::Rule),
            other => Err(format!("unknown segmentation mode {other:?} (expected chunk or rule)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeConfig {
    /// Sentences per document.
    pub sentences: usize,
    /// Tokens per sentence.
    pub sentence_len: usize,
    pub segmentation: Segmentation,
}

/// Multi-hot label target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector(Vec<u8>);

impl LabelVector {
    pub fn new(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self(bits)
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_set(&self, label: usize) -> bool {
        self.0[label] == 1
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }
}

/// A document laid out on a `sentences × sentence_len` grid of token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDocument {
    pub id: String,
    pub sentences: usize,
    pub sentence_len: usize,
    /// Row-major token ids; masked cells hold [`PAD`].
    pub grid: Vec<usize>,
    pub sentence_mask: Vec<bool>,
    pub token_mask: Vec<bool>,
    pub target: LabelVector,
    /// Surface tokens of the kept cells, one list per kept sentence.
    pub surface: Vec<Vec<String>>,
}

impl EncodedDocument {
    pub fn token(&self, sentence: usize, position: usize) -> usize {
        self.grid[sentence * self.sentence_len + position]
    }

    pub fn is_token_live(&self, sentence: usize, position: usize) -> bool {
        self.token_mask[sentence * self.sentence_len + position]
    }

    pub fn live_tokens(&self) -> usize {
        self.token_mask.iter().filter(|&&m| m).count()
    }

    pub fn surface_token(&self, sentence: usize, position: usize) -> Option<&str> {
        self.surface.get(sentence)?.get(position).map(String::as_str)
    }
}

/// Splits text into sentences of tokens.
///
/// Chunk mode windows the whole token stream into runs of `chunk_len`
/// tokens. Rule mode ends a sentence at `.`, `!` or `?` followed by
/// whitespace (or end of text) and at blank lines; empty sentences are
/// dropped.
pub fn segment(text: &str, mode: Segmentation, chunk_len: usize) -> Vec<Vec<String>> {
    match mode {
        Segmentation::Chunk => {
            let tokens = tokenize(text);
            tokens.chunks(chunk_len.max(1)).map(<[String]>::to_vec).collect()
        }
        Segmentation::Rule => split_sentences(text)
            .into_iter()
            .map(tokenize)
            .filter(|s| !s.is_empty())
            .collect(),
    }
}

fn split_sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (pos, ch) = chars[i];
        let next = chars.get(i + 1).map(|&(_, c)| c);
        let boundary_end = match ch {
            '.' | '!' | '?' if next.is_none_or(char::is_whitespace) => Some(pos + ch.len_utf8()),
            '\n' => {
                let mut j = i + 1;
                while j < chars.len() && chars[j].1 != '\n' && chars[j].1.is_whitespace() {
                    j += 1;
                }
                (j < chars.len() && chars[j].1 == '\n').then_some(pos)
            }
            _ => None,
        };
        if let Some(end) = boundary_end {
            out.push(&text[start..end]);
            start = end;
        }
        i += 1;
    }
    out.push(&text[start..]);
    out
}

/// Segments, maps tokens through `vocab`, keeps the document head and pads
/// the rest of the grid.
pub fn encode(
    doc: &RawDocument,
    vocab: &Vocabulary,
    labels: &LabelUniverse,
    config: &EncodeConfig,
) -> Result<EncodedDocument> {
    let target = labels.multi_hot(&doc.labels)?;
    let (n, nt) = (config.sentences, config.sentence_len);
    let mut grid = vec![PAD; n * nt];
    let mut token_mask = vec![false; n * nt];
    let mut sentence_mask = vec![false; n];
    let mut surface = Vec::new();
    for (s, sentence) in segment(&doc.text, config.segmentation, nt)
        .into_iter()
        .take(n)
        .enumerate()
    {
        let kept: Vec<String> = sentence.into_iter().take(nt).collect();
        sentence_mask[s] = !kept.is_empty();
        for (t, tok) in kept.iter().enumerate() {
            grid[s * nt + t] = vocab.lookup(tok);
            token_mask[s * nt + t] = true;
        }
        surface.push(kept);
    }
    Ok(EncodedDocument {
        id: doc.id.clone(),
        sentences: n,
        sentence_len: nt,
        grid,
        sentence_mask,
        token_mask,
        target,
        surface,
    })
}
