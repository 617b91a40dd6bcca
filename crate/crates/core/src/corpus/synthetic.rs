//! Synthetic multi-label corpora with planted, traceable label evidence.
//!
//! Every label owns a few signal tokens. A document's label set is drawn
//! first; each positive label then plants one of its signal tokens into a
//! random slot of the filler text, and the slot is recorded as provenance.
//! Configured label pairs are drawn together with elevated probability.

use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::RawDocument;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_labels: usize,
    /// Total documents across all three splits.
    pub num_docs: usize,
    pub valid_docs: usize,
    pub test_docs: usize,
    /// Mean label-set size.
    pub cardinality_mean: f64,
    /// Distinct tokens, signal tokens included.
    pub vocab_size: usize,
    pub signal_tokens_per_label: usize,
    /// Number of disjoint label pairs `(0,1), (2,3), …` drawn together.
    pub cooccurrence_pairs: usize,
    /// Chance that drawing one member of a pair also draws its partner.
    pub pair_probability: f64,
    /// Chance that a positive label gets its signal token planted.
    pub signal_rate: f64,
    /// Maximum sentences per document; the count is uniform in `[max/2, max]`.
    pub doc_sentences: usize,
    pub sentence_len: usize,
    /// Exponent of the power-law label prior (0 gives uniform labels).
    pub label_skew: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_labels: 20,
            num_docs: 2400,
            valid_docs: 200,
            test_docs: 200,
            cardinality_mean: 1.08,
            vocab_size: 2000,
            signal_tokens_per_label: 2,
            cooccurrence_pairs: 5,
            pair_probability: 0.8,
            signal_rate: 1.0,
            doc_sentences: 12,
            sentence_len: 12,
            label_skew: 0.5,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |f: &str, m: String| Err(Error::config(f, m));
        if self.num_labels < 2 {
            return fail("num_labels", format!("must be at least 2, got {}", self.num_labels));
        }
        if !(self.cardinality_mean > 0.0) || !self.cardinality_mean.is_finite() {
            return fail(
                "cardinality_mean",
                format!("must be positive, got {}", self.cardinality_mean),
            );
        }
        if self.cardinality_mean > self.num_labels as f64 {
            return fail("cardinality_mean", "exceeds num_labels".into());
        }
        if self.valid_docs + self.test_docs >= self.num_docs {
            return fail("num_docs", "must exceed valid_docs + test_docs".into());
        }
        if self.signal_tokens_per_label == 0 {
            return fail("signal_tokens_per_label", "must be positive".into());
        }
        let budget = self.num_labels * self.signal_tokens_per_label;
        if budget >= self.vocab_size {
            return fail(
                "vocab_size",
                format!(
                    "signal token budget {budget} leaves no background tokens in {}",
                    self.vocab_size
                ),
            );
        }
        if 2 * self.cooccurrence_pairs > self.num_labels {
            return fail("cooccurrence_pairs", "more pairs than labels allow".into());
        }
        for (name, p) in [
            ("pair_probability", self.pair_probability),
            ("signal_rate", self.signal_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(name, format!("must lie in [0, 1], got {p}"));
            }
        }
        if self.doc_sentences == 0 || self.sentence_len == 0 {
            return fail("doc_sentences", "documents need at least one sentence and token".into());
        }
        if !(self.label_skew >= 0.0) {
            return fail("label_skew", "must be non-negative".into());
        }
        Ok(())
    }

    pub fn label_name(&self, label: usize) -> String {
        format!("Y{label:03}")
    }

    pub fn signal_token(&self, label: usize, which: usize) -> String {
        format!("sig{label}x{which}")
    }

    /// Partner of `label` in the configured co-occurrence pairs.
    pub fn partner(&self, label: usize) -> Option<usize> {
        (label < 2 * self.cooccurrence_pairs).then_some(label ^ 1)
    }
}

/// Where a label's signal token was planted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSite {
    pub label: String,
    /// Sentence index under rule segmentation.
    pub sentence: usize,
    pub token: usize,
    /// Position in the flat token stream (for chunk segmentation).
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub id: String,
    pub signals: Vec<SignalSite>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<RawDocument>,
    pub valid: Vec<RawDocument>,
    pub test: Vec<RawDocument>,
    pub provenance: Vec<ProvenanceRecord>,
    pub label_names: Vec<String>,
}

impl SyntheticCorpus {
    pub fn provenance_for(&self, id: &str) -> Option<&ProvenanceRecord> {
        self.provenance.iter().find(|p| p.id == id)
    }
}

fn draw_cardinality(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> usize {
    let (base, lambda) = if cfg.cardinality_mean >= 1.0 {
        (1, cfg.cardinality_mean - 1.0)
    } else {
        (0, cfg.cardinality_mean)
    };
    let extra = if lambda > 0.0 {
        Poisson::new(lambda).expect("positive rate").sample(rng) as usize
    } else {
        0
    };
    (base + extra).min(cfg.num_labels)
}

fn draw_label(prior: &[f64], taken: &BTreeSet<usize>, rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = prior
        .iter()
        .enumerate()
        .filter(|(i, _)| !taken.contains(i))
        .map(|(_, w)| w)
        .sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in prior.iter().enumerate() {
        if taken.contains(&i) {
            continue;
        }
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}

fn draw_label_set(cfg: &SynthConfig, prior: &[f64], rng: &mut ChaCha8Rng) -> BTreeSet<usize> {
    let k = draw_cardinality(cfg, rng);
    let mut set = BTreeSet::new();
    while set.len() < k {
        let l = draw_label(prior, &set, rng);
        set.insert(l);
        if let Some(p) = cfg.partner(l) {
            if set.len() < k && !set.contains(&p) && rng.gen::<f64>() < cfg.pair_probability {
                set.insert(p);
            }
        }
    }
    set
}

/// Deterministic per `cfg.seed`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prior: Vec<f64> = (0..cfg.num_labels)
        .map(|l| ((l + 1) as f64).powf(-cfg.label_skew))
        .collect();
    let background_count = cfg.vocab_size - cfg.num_labels * cfg.signal_tokens_per_label;
    let background: Vec<String> = (0..background_count).map(|i| format!("w{i}")).collect();
    let background_dist =
        WeightedIndex::new((0..background_count).map(|i| 1.0 / (i + 1) as f64)).expect("non-empty background");

    let mut docs = Vec::with_capacity(cfg.num_docs);
    let mut provenance = Vec::with_capacity(cfg.num_docs);
    for d in 0..cfg.num_docs {
        let id = format!("doc{d:06}");
        let labels = draw_label_set(cfg, &prior, &mut rng);
        let n_sent = rng.gen_range((cfg.doc_sentences / 2).max(1)..=cfg.doc_sentences);
        let mut sentences: Vec<Vec<String>> = (0..n_sent)
            .map(|_| {
                (0..cfg.sentence_len)
                    .map(|_| background[background_dist.sample(&mut rng)].clone())
                    .collect()
            })
            .collect();
        let mut used = BTreeSet::new();
        let mut signals = Vec::new();
        let capacity = n_sent * cfg.sentence_len;
        for &l in &labels {
            if used.len() == capacity || rng.gen::<f64>() >= cfg.signal_rate {
                continue;
            }
            let offset = loop {
                let o = rng.gen_range(0..capacity);
                if used.insert(o) {
                    break o;
                }
            };
            let (s, t) = (offset / cfg.sentence_len, offset % cfg.sentence_len);
            sentences[s][t] = cfg.signal_token(l, rng.gen_range(0..cfg.signal_tokens_per_label));
            signals.push(SignalSite {
                label: cfg.label_name(l),
                sentence: s,
                token: t,
                offset,
            });
        }
        let mut text = String::new();
        for (i, s) in sentences.iter().enumerate() {
            if i > 0 {
                text.push_str(if i % 4 == 0 { "\n\n" } else { " " });
            }
            text.push_str(&s.join(" "));
            text.push('.');
        }
        docs.push(RawDocument::new(
            id.clone(),
            text,
            labels.iter().map(|&l| cfg.label_name(l)),
        ));
        provenance.push(ProvenanceRecord { id, signals });
    }
    let test = docs.split_off(cfg.num_docs - cfg.test_docs);
    let valid = docs.split_off(docs.len() - cfg.valid_docs);
    Ok(SyntheticCorpus {
        train: docs,
        valid,
        test,
        provenance,
        label_names: (0..cfg.num_labels).map(|l| cfg.label_name(l)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{segment, Segmentation};

    fn mean_cardinality(c: &SyntheticCorpus) -> f64 {
        let all: Vec<&RawDocument> = c.train.iter().chain(&c.valid).chain(&c.test).collect();
        all.iter().map(|d| d.labels.len()).sum::<usize>() as f64 / all.len() as f64
    }

    #[test]
    fn cardinality_matches_configured_mean() {
        let cfg = SynthConfig {
            num_labels: 50,
            num_docs: 5000,
            valid_docs: 500,
            test_docs: 500,
            cardinality_mean: 5.69,
            doc_sentences: 4,
            ..SynthConfig::default()
        };
        let m = mean_cardinality(&generate_synthetic(&cfg).unwrap());
        assert!((m - 5.69).abs() <= 0.3, "mean cardinality {m}");

        let cfg = SynthConfig {
            num_labels: 20,
            num_docs: 5000,
            valid_docs: 500,
            test_docs: 500,
            cardinality_mean: 1.08,
            doc_sentences: 4,
            ..SynthConfig::default()
        };
        let m = mean_cardinality(&generate_synthetic(&cfg).unwrap());
        assert!((m - 1.08).abs() <= 0.1, "mean cardinality {m}");
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig {
            num_docs: 300,
            valid_docs: 30,
            test_docs: 30,
            ..SynthConfig::default()
        };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let other = SynthConfig { seed: 2, ..cfg.clone() };
        assert_ne!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn provenance_points_at_signal_tokens() {
        let cfg = SynthConfig {
            num_docs: 200,
            valid_docs: 20,
            test_docs: 20,
            cardinality_mean: 3.0,
            ..SynthConfig::default()
        };
        let c = generate_synthetic(&cfg).unwrap();
        for d in c.train.iter().chain(&c.valid).chain(&c.test) {
            let prov = c.provenance_for(&d.id).unwrap();
            let sentences = segment(&d.text, Segmentation::Rule, usize::MAX);
            assert_eq!(prov.signals.len(), d.labels.len());
            for site in &prov.signals {
                let l: usize = site.label[1..].parse().unwrap();
                assert!(sentences[site.sentence][site.token].starts_with(&format!("sig{l}x")));
                assert!(d.labels.contains(&site.label));
            }
        }
    }

    #[test]
    fn configured_pairs_cooccur_more_than_others() {
        let cfg = SynthConfig {
            num_labels: 20,
            num_docs: 1200,
            valid_docs: 100,
            test_docs: 100,
            cardinality_mean: 3.0,
            cooccurrence_pairs: 5,
            doc_sentences: 4,
            ..SynthConfig::default()
        };
        let c = generate_synthetic(&cfg).unwrap();
        let count = |a: usize, b: usize| {
            let (na, nb) = (cfg.label_name(a), cfg.label_name(b));
            c.train
                .iter()
                .filter(|d| d.labels.contains(&na) && d.labels.contains(&nb))
                .count()
        };
        let min_paired = (0..5).map(|i| count(2 * i, 2 * i + 1)).min().unwrap();
        // a spread of unconfigured pairs, including the most frequent labels
        let unpaired = [(0, 2), (1, 3), (0, 10), (4, 11), (12, 13), (10, 19), (15, 16), (2, 5)];
        let max_unpaired = unpaired.iter().map(|&(a, b)| count(a, b)).max().unwrap();
        assert!(min_paired > max_unpaired, "{min_paired} vs {max_unpaired}");
    }

    #[test]
    fn invalid_configs() {
        let bad = SynthConfig {
            cardinality_mean: 0.0,
            ..SynthConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "cardinality_mean"));
        let bad = SynthConfig {
            vocab_size: 40,
            ..SynthConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "vocab_size"));
        let bad = SynthConfig {
            num_labels: 1,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
