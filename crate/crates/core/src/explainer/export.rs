use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Highlight, HighlightSentence, HighlightWord};
use crate::corpus::{EncodedDocument, LabelUniverse};
use crate::error::{Error, Result};
use crate::model::AttentionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Sentence,
    Word,
}

/// One line of the structured explanation file.
///
/// `score` is the raw attention weight (`α_s` for sentences, `α_w` for
/// words); `weighted` is the sentence-weighted word score and is absent on
/// sentence records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub doc_id: String,
    pub label: String,
    pub kind: RecordKind,
    pub sentence: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub token: Option<usize>,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weighted: Option<f64>,
    pub text: String,
}

pub fn to_records(doc_id: &str, highlights: &[Highlight]) -> Vec<ExplanationRecord> {
    let mut out = Vec::new();
    for h in highlights {
        for s in &h.sentences {
            out.push(ExplanationRecord {
                doc_id: doc_id.to_string(),
                label: h.label.clone(),
                kind: RecordKind::Sentence,
                sentence: s.sentence,
                token: None,
                score: s.score,
                weighted: None,
                text: s.text.clone(),
            });
        }
        for w in &h.words {
            out.push(ExplanationRecord {
                doc_id: doc_id.to_string(),
                label: h.label.clone(),
                kind: RecordKind::Word,
                sentence: w.sentence,
                token: Some(w.token),
                score: w.score,
                weighted: Some(w.weighted),
                text: w.text.clone(),
            });
        }
    }
    out
}

/// Rebuilds the highlights of `doc_id` for `labels`, in that order. Labels
/// without records come back empty.
pub fn from_records(records: &[ExplanationRecord], doc_id: &str, labels: &[String]) -> Result<Vec<Highlight>> {
    let mut out: Vec<Highlight> = labels
        .iter()
        .map(|l| Highlight {
            label: l.clone(),
            sentences: Vec::new(),
            words: Vec::new(),
        })
        .collect();
    for r in records.iter().filter(|r| r.doc_id == doc_id) {
        let Some(h) = out.iter_mut().find(|h| h.label == r.label) else {
            continue;
        };
        match (r.kind, r.token, r.weighted) {
            (RecordKind::Sentence, _, _) => h.sentences.push(HighlightSentence {
                sentence: r.sentence,
                score: r.score,
                text: r.text.clone(),
            }),
            (RecordKind::Word, Some(token), Some(weighted)) => h.words.push(HighlightWord {
                sentence: r.sentence,
                token,
                score: r.score,
                weighted,
                text: r.text.clone(),
            }),
            (RecordKind::Word, ..) => {
                return Err(Error::format(
                    "explanation record",
                    "word record without token or weighted score",
                ))
            }
        }
    }
    Ok(out)
}

/// Writes records as JSON lines.
pub fn write_structured(mut w: impl Write, records: &[ExplanationRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualOptions {
    /// Show only the first `compact_tokens` tokens of each sentence.
    pub compact: bool,
    pub compact_tokens: usize,
}

impl Default for VisualOptions {
    fn default() -> Self {
        Self {
            compact: false,
            compact_tokens: 11,
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

const STYLE: &str = "body{font-family:sans-serif;margin:1.5em}\
table{border-collapse:collapse;margin-bottom:1.5em}\
td,th{border:1px solid #ccc;padding:2px 6px;vertical-align:top}\
td.score{text-align:right;font-family:monospace}\
tr.selected td.score{font-weight:bold}\
span.tok{padding:0 1px}";

/// A standalone HTML page: per document and explained label, one row per
/// live sentence with its `α_s` and the tokens shaded by their weighted
/// score. Only highlighted words are shaded.
pub fn visual_html(
    docs: &[(&EncodedDocument, &AttentionRecord, &[Highlight])],
    labels: &LabelUniverse,
    opts: &VisualOptions,
) -> Result<String> {
    let mut out = String::new();
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Attention explanations</title><style>{STYLE}</style></head><body>\n"
    );
    for (doc, record, highlights) in docs {
        let _ = writeln!(out, "<h2>{}</h2>", escape(&doc.id));
        if highlights.is_empty() {
            let _ = writeln!(out, "<p>");
            for s in (0..doc.sentences).filter(|&s| doc.sentence_mask[s]) {
                let _ = write!(out, "{} ", escape(&super::sentence_text(doc, s)));
            }
            let _ = writeln!(out, "</p>");
        }
        for h in highlights.iter() {
            let l = labels
                .index_of(&h.label)
                .ok_or_else(|| Error::UnknownLabels(vec![h.label.clone()]))?;
            let _ = writeln!(
                out,
                "<h3>{}</h3>\n<table><tr><th>sentence</th><th>score</th><th>text</th></tr>",
                escape(&h.label)
            );
            for s in (0..doc.sentences).filter(|&s| doc.sentence_mask[s]) {
                let selected = h.sentences.iter().any(|x| x.sentence == s);
                let _ = write!(
                    out,
                    "<tr{}><td>{}</td><td class=\"score\">{:.4}</td><td>",
                    if selected { " class=\"selected\"" } else { "" },
                    s + 1,
                    record.sentence_weight(l, s)
                );
                let live: Vec<usize> = (0..doc.sentence_len).filter(|&t| doc.is_token_live(s, t)).collect();
                let shown = if opts.compact {
                    live.len().min(opts.compact_tokens)
                } else {
                    live.len()
                };
                for &t in &live[..shown] {
                    let text = escape(doc.surface_token(s, t).unwrap_or_default());
                    match h.words.iter().find(|w| w.sentence == s && w.token == t) {
                        Some(w) => {
                            let _ = write!(
                                out,
                                "<span class=\"tok\" style=\"background:rgba(214,39,40,{:.3})\" title=\"{:.4}\">{text}</span> ",
                                w.weighted.clamp(0.0, 1.0),
                                w.weighted
                            );
                        }
                        None => {
                            let _ = write!(out, "<span class=\"tok\">{text}</span> ");
                        }
                    }
                }
                if shown < live.len() {
                    out.push('…');
                }
                let _ = writeln!(out, "</td></tr>");
            }
            let _ = writeln!(out, "</table>");
        }
    }
    out.push_str("</body></html>\n");
    Ok(out)
}
