mod common;

use common::{random_params, tiny_config};
use hlan::corpus::{build_vocab, encode, EncodeConfig, EncodedDocument, LabelUniverse, RawDocument, Segmentation};
use hlan::explainer::{
    explain, from_records, select_highlights, sentence_weighted_scores, to_records, visual_html, write_structured,
    ExplanationRecord, Highlight, HighlightOptions, VisualOptions, WordScore,
};
use hlan::model::{forward, AttentionRecord, ModelConfig, Variant};
use proptest::prelude::*;

const TEXT: &str = "alpha beta gamma delta eps zeta eta theta iota kappa lambda mu nu xi omicron \
                    pi rho sigma tau upsilon phi chi psi omega one two three four five six";

fn document(sentences: usize, len: usize) -> (EncodedDocument, LabelUniverse) {
    let raw = RawDocument::new("d1", TEXT, ["a", "b", "c"]);
    let vocab = build_vocab(std::slice::from_ref(&raw), 0).unwrap();
    let labels = LabelUniverse::new(["a", "b", "c"]);
    let cfg = EncodeConfig {
        sentences,
        sentence_len: len,
        segmentation: Segmentation::Chunk,
    };
    (encode(&raw, &vocab, &labels, &cfg).unwrap(), labels)
}

/// A record whose weights are arbitrary but normalized per context.
fn synthetic_record(doc: &EncodedDocument, contexts: usize, seed: u64) -> AttentionRecord {
    let mut r = common::rng(seed);
    use rand::Rng;
    let (n, nt) = (doc.sentences, doc.sentence_len);
    let mut word = vec![vec![0.0; n * nt]; contexts];
    let mut sentence = vec![vec![0.0; n]; contexts];
    for c in 0..contexts {
        for s in 0..n {
            let live: Vec<usize> = (0..nt).filter(|&t| doc.is_token_live(s, t)).collect();
            let raw: Vec<f64> = live.iter().map(|_| r.gen_range(0.0..1.0f64).powi(4)).collect();
            let total: f64 = raw.iter().sum();
            for (&t, v) in live.iter().zip(raw) {
                word[c][s * nt + t] = v / total;
            }
        }
        let raw: Vec<f64> = (0..n)
            .map(|s| {
                if doc.sentence_mask[s] {
                    r.gen_range(0.0..1.0f64).powi(3)
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        sentence[c] = raw.iter().map(|v| v / total).collect();
    }
    AttentionRecord {
        sentences: n,
        sentence_len: nt,
        word,
        sentence,
        sentence_mask: doc.sentence_mask.clone(),
        token_mask: doc.token_mask.clone(),
    }
}

#[test]
fn sentences_above_threshold_are_selected() {
    let (doc, labels) = document(3, 10);
    let mut rec = synthetic_record(&doc, 3, 1);
    rec.sentence[0] = vec![0.54, 0.18, 0.28];
    rec.sentence[1] = vec![0.05, 0.04, 0.91];
    rec.sentence[2] = vec![0.1, 0.1, 0.8];
    let hs = select_highlights(&rec, &doc, &labels, &[0, 1, 2], &HighlightOptions::default()).unwrap();
    let picked: Vec<Vec<usize>> = hs
        .iter()
        .map(|h| h.sentences.iter().map(|s| s.sentence).collect())
        .collect();
    assert_eq!(picked, [vec![0, 1, 2], vec![2], vec![2]]);
    assert_eq!(
        hs[0].sentences[0].text,
        "alpha beta gamma delta eps zeta eta theta iota kappa"
    );

    let mut flat = rec.clone();
    flat.sentence[0] = vec![0.1, 0.1, 0.1];
    let hs = select_highlights(&flat, &doc, &labels, &[0], &HighlightOptions::default()).unwrap();
    assert!(hs[0].sentences.is_empty() && hs[0].words.is_empty());
}

#[test]
fn weighted_scores_are_bounded_and_vanish_with_either_factor() {
    let (doc, _) = document(3, 10);
    for seed in 0..20 {
        let mut rec = synthetic_record(&doc, 3, seed);
        rec.sentence[1][2] = 0.0;
        rec.word[1][4] = 0.0;
        let scores = sentence_weighted_scores(&rec, 1, 5.0);
        for (i, &v) in scores.iter().enumerate() {
            assert!((0.0..=1.0).contains(&v));
            let (s, t) = (i / 10, i % 10);
            let zero = rec.sentence_weight(1, s) == 0.0 || rec.word_weight(1, s, t) == 0.0;
            assert_eq!(v == 0.0, zero, "cell {i}");
        }
    }
}

#[test]
fn shared_attention_explains_every_label_alike() {
    let (doc, labels) = document(3, 10);
    let rec = synthetic_record(&doc, 1, 5);
    let opts = HighlightOptions {
        sentence_threshold: 0.05,
        ..Default::default()
    };
    let hs = select_highlights(&rec, &doc, &labels, &[0, 1, 2], &opts).unwrap();
    for h in &hs[1..] {
        assert_eq!(h.sentences, hs[0].sentences);
        assert_eq!(h.words, hs[0].words);
    }

    // and so does a trained-shape HAN forward pass
    let mut cfg = tiny_config(Variant::Han);
    cfg.num_labels = 3;
    cfg.vocab_size = 40;
    cfg.sentences = 3;
    cfg.sentence_len = 10;
    let params = random_params(&cfg, 2, 0.5);
    let (_, rec) = forward(&doc, &params, &cfg).unwrap();
    let hs = select_highlights(&rec, &doc, &labels, &[0, 2], &opts).unwrap();
    assert_eq!(hs[0].words, hs[1].words);
}

#[test]
fn structured_export_round_trips() {
    let (doc, labels) = document(3, 10);
    let rec = synthetic_record(&doc, 3, 9);
    let opts = HighlightOptions {
        sentence_threshold: 0.05,
        ..Default::default()
    };
    let hs = select_highlights(&rec, &doc, &labels, &[0, 2], &opts).unwrap();
    assert!(hs.iter().any(|h| !h.words.is_empty()));
    let mut buf = Vec::new();
    write_structured(&mut buf, &to_records(&doc.id, &hs)).unwrap();
    let parsed: Vec<ExplanationRecord> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let names: Vec<String> = hs.iter().map(|h| h.label.clone()).collect();
    assert_eq!(from_records(&parsed, &doc.id, &names).unwrap(), hs);
    let first: serde_json::Value = serde_json::to_value(&parsed[0]).unwrap();
    for key in ["doc_id", "label", "kind", "sentence", "score", "text"] {
        assert!(first.get(key).is_some(), "{key}");
    }
}

#[test]
fn visual_export() {
    let (doc, labels) = document(2, 15);
    let rec = synthetic_record(&doc, 3, 4);
    let empty: Vec<Highlight> = Vec::new();
    let page = visual_html(&[(&doc, &rec, &empty)], &labels, &VisualOptions::default()).unwrap();
    assert!(page.contains("alpha beta") && !page.contains("rgba"));

    let opts = HighlightOptions {
        sentence_threshold: 0.01,
        word_threshold: 0.01,
        word_score: WordScore::Weighted,
        ..Default::default()
    };
    let hs = select_highlights(&rec, &doc, &labels, &[1], &opts).unwrap();
    let full = visual_html(&[(&doc, &rec, &hs)], &labels, &VisualOptions::default()).unwrap();
    assert!(full.contains("rgba(") && full.contains("omicron"));
    let compact = visual_html(
        &[(&doc, &rec, &hs)],
        &labels,
        &VisualOptions {
            compact: true,
            ..Default::default()
        },
    )
    .unwrap();
    // 12th token of each 15-token sentence is cut
    assert!(!compact.contains(">mu<") && !compact.contains(">three<"));
    assert!(compact.contains(">lambda<") && compact.contains(">two<"));
    assert!(full.contains(">mu<"));
}

#[test]
fn explain_covers_predicted_labels() {
    let (doc, labels) = document(3, 10);
    let mut cfg: ModelConfig = tiny_config(Variant::Hlan);
    cfg.num_labels = 3;
    cfg.vocab_size = 40;
    cfg.sentences = 3;
    cfg.sentence_len = 10;
    let mut params = random_params(&cfg, 2, 0.5);
    params.bias.data_mut().copy_from_slice(&[30.0, -30.0, 30.0]);
    let (e, _) = explain(&doc, &params, &cfg, &labels, 0.5, &HighlightOptions::default()).unwrap();
    assert_eq!(e.predicted, ["a", "c"]);
    assert_eq!(e.highlights.len(), 2);
}

proptest! {
    #[test]
    fn raising_thresholds_never_adds_highlights(seed in 0u64..500, s1 in 0.01f64..0.9, s2 in 0.01f64..0.9,
                                                w1 in 0.001f64..0.5, w2 in 0.001f64..0.5, weighted in any::<bool>()) {
        let (doc, labels) = document(3, 10);
        let rec = synthetic_record(&doc, 3, seed);
        let score = if weighted { WordScore::Weighted } else { WordScore::Raw };
        let lo = HighlightOptions { sentence_threshold: s1.min(s2), word_threshold: w1.min(w2), word_score: score, ..Default::default() };
        let hi = HighlightOptions { sentence_threshold: s1.max(s2), word_threshold: w1.max(w2), word_score: score, ..Default::default() };
        let a = select_highlights(&rec, &doc, &labels, &[0, 1, 2], &lo).unwrap();
        let b = select_highlights(&rec, &doc, &labels, &[0, 1, 2], &hi).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(y.sentences.iter().all(|s| x.sentences.contains(s)));
            prop_assert!(y.words.iter().all(|w| x.words.contains(w)));
        }
    }
}
