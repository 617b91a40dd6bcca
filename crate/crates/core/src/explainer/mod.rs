//! Highlights derived from attention weights, and their exports.

mod export;

pub use export::{
    from_records, to_records, visual_html, write_structured, ExplanationRecord, RecordKind, VisualOptions,
};

use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedDocument, LabelUniverse};
use crate::error::{Error, Result};
use crate::model::{forward, AttentionRecord, ModelConfig, ModelParams};

pub const DEFAULT_MU: f64 = 5.0;
pub const DEFAULT_SENTENCE_THRESHOLD: f64 = 0.1;
pub const DEFAULT_WORD_THRESHOLD: f64 = 0.01;

/// `min(1, μ · α_s · α_w)`.
pub fn weighted_score(mu: f64, sentence: f64, word: f64) -> f64 {
    (mu * sentence * word).min(1.0)
}

/// Sentence-weighted word scores for `label` on the record's grid.
pub fn sentence_weighted_scores(record: &AttentionRecord, label: usize, mu: f64) -> Vec<f64> {
    let nt = record.sentence_len;
    (0..record.sentences * nt)
        .map(|i| {
            weighted_score(
                mu,
                record.sentence_weight(label, i / nt),
                record.word_weight(label, i / nt, i % nt),
            )
        })
        .collect()
}

/// Grid cell with the highest weighted score for `label`, or `None` when
/// every score is zero. Cells tied by the clip at 1 are ordered by the
/// unclipped product, then by position.
pub fn top_weighted_token(record: &AttentionRecord, label: usize, mu: f64) -> Option<(usize, usize)> {
    let nt = record.sentence_len;
    let key = |i: usize| {
        let raw = record.sentence_weight(label, i / nt) * record.word_weight(label, i / nt, i % nt);
        (weighted_score(mu, 1.0, raw), raw)
    };
    let mut best: Option<(usize, (f64, f64))> = None;
    for i in 0..record.sentences * nt {
        let k = key(i);
        if k.1 > 0.0 && best.is_none_or(|(_, b)| k > b) {
            best = Some((i, k));
        }
    }
    best.map(|(i, _)| (i / nt, i % nt))
}

/// Sentence with the highest weight for `label` (first on ties).
pub fn top_sentence(record: &AttentionRecord, label: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for s in 0..record.sentences {
        let w = record.sentence_weight(label, s);
        if w > 0.0 && best.is_none_or(|b| w > record.sentence_weight(label, b)) {
            best = Some(s);
        }
    }
    best
}

/// Which word score is compared against the word threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WordScore {
    /// Raw `α_w`, as reported in tables.
    #[default]
    Raw,
    /// Sentence-weighted `α̃_w`, as used for coloring.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighlightOptions {
    pub sentence_threshold: f64,
    pub word_threshold: f64,
    pub mu: f64,
    pub word_score: WordScore,
}

impl Default for HighlightOptions {
    fn default() -> Self {
        Self {
            sentence_threshold: DEFAULT_SENTENCE_THRESHOLD,
            word_threshold: DEFAULT_WORD_THRESHOLD,
            mu: DEFAULT_MU,
            word_score: WordScore::Raw,
        }
    }
}

impl HighlightOptions {
    pub fn validate(&self) -> Result<()> {
        for (field, t) in [
            ("sentence_threshold", self.sentence_threshold),
            ("word_threshold", self.word_threshold),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::config(field, "must lie strictly between 0 and 1"));
            }
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::config("mu", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightSentence {
    pub sentence: usize,
    /// `α_s`.
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightWord {
    pub sentence: usize,
    pub token: usize,
    /// `α_w`.
    pub score: f64,
    /// `α̃_w`.
    pub weighted: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub label: String,
    pub sentences: Vec<HighlightSentence>,
    pub words: Vec<HighlightWord>,
}

fn surface(doc: &EncodedDocument, s: usize, t: usize) -> String {
    doc.surface_token(s, t).unwrap_or_default().to_string()
}

/// Live tokens of sentence `s`, space-joined.
pub fn sentence_text(doc: &EncodedDocument, s: usize) -> String {
    (0..doc.sentence_len)
        .filter(|&t| doc.is_token_live(s, t))
        .map(|t| surface(doc, s, t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Sentences with `α_s` above the sentence threshold and, inside them, the
/// words whose chosen score is above the word threshold, for each label in
/// `labels_to_explain`. Shared-attention models give every label the same
/// sentences and words.
pub fn select_highlights(
    record: &AttentionRecord,
    doc: &EncodedDocument,
    labels: &LabelUniverse,
    labels_to_explain: &[usize],
    opts: &HighlightOptions,
) -> Result<Vec<Highlight>> {
    opts.validate()?;
    if record.sentences != doc.sentences || record.sentence_len != doc.sentence_len {
        return Err(Error::Mismatch(format!(
            "attention record does not belong to document {}",
            doc.id
        )));
    }
    let mut out = Vec::with_capacity(labels_to_explain.len());
    for &l in labels_to_explain {
        if l >= labels.len() {
            return Err(Error::Mismatch(format!(
                "label index {l} outside {} labels",
                labels.len()
            )));
        }
        let mut h = Highlight {
            label: labels.name(l).to_string(),
            sentences: Vec::new(),
            words: Vec::new(),
        };
        for s in 0..record.sentences {
            let a_s = record.sentence_weight(l, s);
            if a_s <= opts.sentence_threshold {
                continue;
            }
            h.sentences.push(HighlightSentence {
                sentence: s,
                score: a_s,
                text: sentence_text(doc, s),
            });
            for t in 0..record.sentence_len {
                if !doc.is_token_live(s, t) {
                    continue;
                }
                let a_w = record.word_weight(l, s, t);
                let weighted = weighted_score(opts.mu, a_s, a_w);
                let chosen = match opts.word_score {
                    WordScore::Raw => a_w,
                    WordScore::Weighted => weighted,
                };
                if chosen > opts.word_threshold {
                    h.words.push(HighlightWord {
                        sentence: s,
                        token: t,
                        score: a_w,
                        weighted,
                        text: surface(doc, s, t),
                    });
                }
            }
        }
        out.push(h);
    }
    Ok(out)
}

/// Prediction plus highlights for the predicted labels of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub doc_id: String,
    pub probabilities: Vec<f64>,
    pub predicted: Vec<String>,
    pub highlights: Vec<Highlight>,
}

pub fn explain(
    doc: &EncodedDocument,
    params: &ModelParams,
    config: &ModelConfig,
    labels: &LabelUniverse,
    threshold: f64,
    opts: &HighlightOptions,
) -> Result<(Explanation, AttentionRecord)> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config("threshold", "must lie strictly between 0 and 1"));
    }
    let (probabilities, record) = forward(doc, params, config)?;
    let predicted: Vec<usize> = (0..probabilities.len())
        .filter(|&l| probabilities[l] > threshold)
        .collect();
    let highlights = select_highlights(&record, doc, labels, &predicted, opts)?;
    let explanation = Explanation {
        doc_id: doc.id.clone(),
        predicted: predicted.iter().map(|&l| labels.name(l).to_string()).collect(),
        probabilities,
        highlights,
    };
    Ok((explanation, record))
}
