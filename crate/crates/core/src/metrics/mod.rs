//! Multi-label evaluation: thresholded P/R/F1, ranking AUC, precision@k,
//! and the neighbor-overlap analysis of label-initialized layers.

mod jaccard;
mod report;

pub use jaccard::{jaccard, jaccard_le_analysis, jaccard_null, top_k_neighbors, JaccardReport};
pub use report::{evaluate, LabelMetrics, MetricsReport};

use serde::{Deserialize, Serialize};

use crate::corpus::LabelVector;
use crate::error::{Error, Result};

/// Per-label decision counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    #[serde(rename = "fn")]
    pub fn_: Vec<u64>,
    pub tn: Vec<u64>,
}

impl ConfusionCounts {
    pub fn num_labels(&self) -> usize {
        self.tp.len()
    }
}

fn check_universe(preds: &[LabelVector], truths: &[LabelVector]) -> Result<usize> {
    if preds.len() != truths.len() {
        return Err(Error::Mismatch(format!(
            "{} predictions for {} documents",
            preds.len(),
            truths.len()
        )));
    }
    let width = truths.first().map_or(0, LabelVector::len);
    if preds.iter().chain(truths).any(|v| v.len() != width) {
        return Err(Error::Mismatch("label vectors of different widths".into()));
    }
    Ok(width)
}

pub fn confusion(preds: &[LabelVector], truths: &[LabelVector]) -> Result<ConfusionCounts> {
    let width = check_universe(preds, truths)?;
    let mut c = ConfusionCounts {
        tp: vec![0; width],
        fp: vec![0; width],
        fn_: vec![0; width],
        tn: vec![0; width],
    };
    for (p, t) in preds.iter().zip(truths) {
        for l in 0..width {
            match (p.is_set(l), t.is_set(l)) {
                (true, true) => c.tp[l] += 1,
                (true, false) => c.fp[l] += 1,
                (false, true) => c.fn_[l] += 1,
                (false, false) => c.tn[l] += 1,
            }
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `num / den`, or 0 for an empty denominator.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub(crate) fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Prf {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }

    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        Self::from_pr(ratio(tp, tp + fp), ratio(tp, tp + fn_))
    }
}

/// Per-label scores.
pub fn per_label(counts: &ConfusionCounts) -> Vec<Prf> {
    (0..counts.num_labels())
        .map(|l| Prf::from_counts(counts.tp[l], counts.fp[l], counts.fn_[l]))
        .collect()
}

/// Micro (pooled counts) and macro (mean of per-label P and R) scores.
/// Every F1 is the harmonic mean of the P and R next to it.
pub fn micro_macro(counts: &ConfusionCounts) -> (Prf, Prf) {
    let sum = |v: &[u64]| v.iter().sum::<u64>();
    let micro = Prf::from_counts(sum(&counts.tp), sum(&counts.fp), sum(&counts.fn_));
    let labels = per_label(counts);
    let n = labels.len().max(1) as f64;
    let macro_ = Prf::from_pr(
        labels.iter().map(|p| p.precision).sum::<f64>() / n,
        labels.iter().map(|p| p.recall).sum::<f64>() / n,
    );
    (micro, macro_)
}

/// Labels with `p > threshold`.
pub fn threshold_predictions(scores: &[f64], threshold: f64) -> LabelVector {
    LabelVector::new(scores.iter().map(|&p| u8::from(p > threshold)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AucMode {
    Micro,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub value: f64,
    /// Labels left out of the macro average for lacking a positive or a negative.
    pub skipped: Vec<usize>,
}

/// Mann–Whitney statistic: the probability that a random positive outscores
/// a random negative, ties counting one half. `None` when either class is empty.
pub fn rank_auc(pairs: &[(f64, bool)]) -> Option<f64> {
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // average 1-based ranks over tie groups
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].0 == sorted[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * sorted[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

fn check_scores(scores: &[Vec<f64>], truths: &[LabelVector]) -> Result<usize> {
    if scores.len() != truths.len() {
        return Err(Error::Mismatch(format!(
            "{} score rows for {} documents",
            scores.len(),
            truths.len()
        )));
    }
    let width = truths.first().map_or(0, LabelVector::len);
    if scores.iter().any(|s| s.len() != width) || truths.iter().any(|t| t.len() != width) {
        return Err(Error::Mismatch("score rows and label vectors differ in width".into()));
    }
    Ok(width)
}

pub fn auc(scores: &[Vec<f64>], truths: &[LabelVector], mode: AucMode) -> Result<AucResult> {
    let width = check_scores(scores, truths)?;
    match mode {
        AucMode::Micro => {
            let pairs: Vec<(f64, bool)> = scores
                .iter()
                .zip(truths)
                .flat_map(|(s, t)| (0..width).map(move |l| (s[l], t.is_set(l))))
                .collect();
            let value =
                rank_auc(&pairs).ok_or_else(|| Error::Undefined("micro AUC needs positives and negatives".into()))?;
            Ok(AucResult {
                value,
                skipped: Vec::new(),
            })
        }
        AucMode::Macro => {
            let mut values = Vec::new();
            let mut skipped = Vec::new();
            for l in 0..width {
                let pairs: Vec<(f64, bool)> = scores.iter().zip(truths).map(|(s, t)| (s[l], t.is_set(l))).collect();
                match rank_auc(&pairs) {
                    Some(v) => values.push(v),
                    None => skipped.push(l),
                }
            }
            if values.is_empty() {
                return Err(Error::Undefined("no label has both positives and negatives".into()));
            }
            Ok(AucResult {
                value: values.iter().sum::<f64>() / values.len() as f64,
                skipped,
            })
        }
    }
}

/// Indices of the `k` highest scores, ties broken by lower index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Mean over documents of the fraction of the top `k` labels that are true.
pub fn precision_at_k(scores: &[Vec<f64>], truths: &[LabelVector], k: usize) -> Result<f64> {
    let width = check_scores(scores, truths)?;
    if k == 0 || k > width {
        return Err(Error::config("k", format!("must lie in 1..={width}")));
    }
    if scores.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let total: f64 = scores
        .iter()
        .zip(truths)
        .map(|(s, t)| top_k_indices(s, k).into_iter().filter(|&l| t.is_set(l)).count() as f64 / k as f64)
        .sum();
    Ok(total / scores.len() as f64)
}

/// Default k for precision@k: 5 for around 50 labels, 1 for around 20,
/// 8 for larger universes.
pub fn default_k(num_labels: usize) -> usize {
    let k = if num_labels <= 30 {
        1
    } else if num_labels <= 60 {
        5
    } else {
        8
    };
    k.min(num_labels.max(1))
}
