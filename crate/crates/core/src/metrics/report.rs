use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{auc, confusion, micro_macro, per_label, precision_at_k, rank_auc, threshold_predictions, AucMode, Prf};
use crate::corpus::{LabelUniverse, LabelVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Positive documents for this label.
    pub frequency: u64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_docs: usize,
    pub threshold: f64,
    pub micro: Prf,
    #[serde(rename = "macro")]
    pub macro_: Prf,
    pub micro_auc: Option<f64>,
    pub macro_auc: Option<f64>,
    pub auc_skipped_labels: Vec<String>,
    /// Keyed `P@k`.
    pub precision_at_k: BTreeMap<String, f64>,
    pub per_label: Vec<LabelMetrics>,
}

/// Full report for scored documents: thresholded P/R/F1 at `threshold`,
/// AUCs, and precision at every `k` in `ks`.
pub fn evaluate(
    scores: &[Vec<f64>],
    truths: &[LabelVector],
    labels: &LabelUniverse,
    threshold: f64,
    ks: &[usize],
) -> Result<MetricsReport> {
    if scores.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let preds: Vec<LabelVector> = scores.iter().map(|s| threshold_predictions(s, threshold)).collect();
    let counts = confusion(&preds, truths)?;
    if counts.num_labels() != labels.len() {
        return Err(Error::Mismatch(format!(
            "{} labels scored, universe has {}",
            counts.num_labels(),
            labels.len()
        )));
    }
    let (micro, macro_) = micro_macro(&counts);
    let micro_auc = auc(scores, truths, AucMode::Micro).ok().map(|r| r.value);
    let macro_result = auc(scores, truths, AucMode::Macro).ok();
    let mut precision = BTreeMap::new();
    for &k in ks {
        precision.insert(format!("P@{k}"), precision_at_k(scores, truths, k)?);
    }
    let per_label = per_label(&counts)
        .into_iter()
        .enumerate()
        .map(|(l, prf)| {
            let pairs: Vec<(f64, bool)> = scores.iter().zip(truths).map(|(s, t)| (s[l], t.is_set(l))).collect();
            LabelMetrics {
                label: labels.name(l).to_string(),
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
                frequency: counts.tp[l] + counts.fn_[l],
                auc: rank_auc(&pairs),
            }
        })
        .collect();
    Ok(MetricsReport {
        num_docs: scores.len(),
        threshold,
        micro,
        macro_,
        micro_auc,
        macro_auc: macro_result.as_ref().map(|r| r.value),
        auc_skipped_labels: macro_result
            .map(|r| r.skipped.iter().map(|&l| labels.name(l).to_string()).collect())
            .unwrap_or_else(|| labels.labels().to_vec()),
        precision_at_k: precision,
        per_label,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "     n/a".to_string(), |x| format!("{x:8.4}"))
}

impl MetricsReport {
    /// Plain-text summary table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "documents: {}  threshold: {}", self.num_docs, self.threshold);
        let _ = writeln!(out, "{:<8}{:>8}{:>8}{:>8}{:>8}", "", "AUC", "P", "R", "F1");
        for (name, prf, a) in [
            ("macro", &self.macro_, self.macro_auc),
            ("micro", &self.micro, self.micro_auc),
        ] {
            let _ = writeln!(
                out,
                "{name:<8}{}{:8.4}{:8.4}{:8.4}",
                cell(a),
                prf.precision,
                prf.recall,
                prf.f1
            );
        }
        for (k, v) in &self.precision_at_k {
            let _ = writeln!(out, "{k:<8}{v:8.4}");
        }
        if !self.auc_skipped_labels.is_empty() {
            let _ = writeln!(out, "macro AUC skipped: {}", self.auc_skipped_labels.join(" "));
        }
        let _ = writeln!(
            out,
            "\n{:<24}{:>8}{:>8}{:>8}{:>8}{:>8}",
            "label", "freq", "P", "R", "F1", "AUC"
        );
        for l in &self.per_label {
            let _ = writeln!(
                out,
                "{:<24}{:>8}{:8.4}{:8.4}{:8.4}{}",
                l.label,
                l.frequency,
                l.precision,
                l.recall,
                l.f1,
                cell(l.auc)
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("metrics report", e))
    }
}
