use hlan::corpus::{LabelUniverse, LabelVector};
use hlan::metrics::{auc, confusion, evaluate, jaccard, micro_macro, precision_at_k, threshold_predictions, AucMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random scores on a coarse grid (so ties happen) and random truths.
fn instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<LabelVector>) {
    let docs = rng.gen_range(2..30);
    let labels = rng.gen_range(1..8);
    let scores = (0..docs)
        .map(|_| (0..labels).map(|_| rng.gen_range(0..10) as f64 / 10.0).collect())
        .collect();
    let truths = (0..docs)
        .map(|_| LabelVector::new((0..labels).map(|_| u8::from(rng.gen_bool(0.3))).collect()))
        .collect();
    (scores, truths)
}

/// Area under the ROC polyline, sweeping every distinct threshold.
fn trapezoid_auc(pairs: &[(f64, bool)]) -> Option<f64> {
    let pos = pairs.iter().filter(|p| p.1).count() as f64;
    let neg = pairs.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    let mut cuts: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cuts.dedup();
    let (mut fpr0, mut tpr0, mut area) = (0.0, 0.0, 0.0);
    for c in cuts {
        let tpr = pairs.iter().filter(|p| p.1 && p.0 >= c).count() as f64 / pos;
        let fpr = pairs.iter().filter(|p| !p.1 && p.0 >= c).count() as f64 / neg;
        area += (fpr - fpr0) * (tpr + tpr0) / 2.0;
        fpr0 = fpr;
        tpr0 = tpr;
    }
    Some(area)
}

/// Top-k by repeated first-argmax.
fn selection_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut taken = vec![false; scores.len()];
    let mut out = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for (i, &s) in scores.iter().enumerate() {
            if !taken[i] && best.is_none_or(|b| s > scores[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        out.push(b);
    }
    out
}

#[test]
fn metrics_match_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked_auc = 0;
    for _ in 0..1000 {
        let (scores, truths) = instance(&mut rng);
        let width = truths[0].len();
        let th = rng.gen_range(0..10) as f64 / 10.0;
        let preds: Vec<LabelVector> = scores.iter().map(|s| threshold_predictions(s, th)).collect();

        // counts from set membership
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (s, t) in scores.iter().zip(&truths) {
            let predicted: Vec<usize> = (0..width).filter(|&l| s[l] > th).collect();
            let truth: Vec<usize> = t.positives().collect();
            tp += predicted.iter().filter(|l| truth.contains(l)).count() as u64;
            fp += predicted.iter().filter(|l| !truth.contains(l)).count() as u64;
            fn_ += truth.iter().filter(|l| !predicted.contains(l)).count() as u64;
        }
        let c = confusion(&preds, &truths).unwrap();
        assert_eq!(c.tp.iter().sum::<u64>(), tp);
        assert_eq!(c.fp.iter().sum::<u64>(), fp);
        assert_eq!(c.fn_.iter().sum::<u64>(), fn_);

        let (micro, macro_) = micro_macro(&c);
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        assert!((micro.f1 - f1).abs() < 1e-12);
        let h = |p: f64, r: f64| {
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        };
        assert!((macro_.f1 - h(macro_.precision, macro_.recall)).abs() < 1e-15);

        let micro_pairs: Vec<(f64, bool)> = scores
            .iter()
            .zip(&truths)
            .flat_map(|(s, t)| (0..width).map(move |l| (s[l], t.is_set(l))))
            .collect();
        match (trapezoid_auc(&micro_pairs), auc(&scores, &truths, AucMode::Micro)) {
            (Some(want), Ok(got)) => {
                assert!((got.value - want).abs() < 1e-12, "{} vs {want}", got.value);
                checked_auc += 1;
            }
            (None, Err(_)) => {}
            (w, g) => panic!("oracle {w:?}, metric {g:?}"),
        }
        let per: Vec<f64> = (0..width)
            .filter_map(|l| {
                let pairs: Vec<(f64, bool)> = scores.iter().zip(&truths).map(|(s, t)| (s[l], t.is_set(l))).collect();
                trapezoid_auc(&pairs)
            })
            .collect();
        match auc(&scores, &truths, AucMode::Macro) {
            Ok(got) => {
                let want = per.iter().sum::<f64>() / per.len() as f64;
                assert!((got.value - want).abs() < 1e-12);
                assert_eq!(got.skipped.len() + per.len(), width);
            }
            Err(_) => assert!(per.is_empty()),
        }

        let k = rng.gen_range(1..=width);
        let want = scores
            .iter()
            .zip(&truths)
            .map(|(s, t)| selection_top_k(s, k).into_iter().filter(|&l| t.is_set(l)).count() as f64 / k as f64)
            .sum::<f64>()
            / scores.len() as f64;
        assert!((precision_at_k(&scores, &truths, k).unwrap() - want).abs() < 1e-12);
    }
    assert!(checked_auc > 900);
}

#[test]
fn two_document_report() {
    let labels = LabelUniverse::new(["1", "2", "3"]);
    let truths = vec![LabelVector::new(vec![1, 0, 0]), LabelVector::new(vec![0, 1, 1])];
    // predicted {1, 2} and {3}
    let scores = vec![vec![0.9, 0.8, 0.1], vec![0.1, 0.2, 0.7]];
    let r = evaluate(&scores, &truths, &labels, 0.5, &[1]).unwrap();
    assert!((r.micro.precision - 2.0 / 3.0).abs() < 1e-12);
    assert!((r.micro.recall - 2.0 / 3.0).abs() < 1e-12);
    assert!((r.micro.f1 - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn auc_has_no_defined_value_for_one_class() {
    let truths = vec![LabelVector::new(vec![1, 1]); 3];
    let scores = vec![vec![0.1, 0.9]; 3];
    assert!(auc(&scores, &truths, AucMode::Micro).is_err());
    assert!(auc(&scores, &truths, AucMode::Macro).is_err());
}

proptest! {
    #[test]
    fn relabeling_leaves_micro_and_macro_unchanged(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scores, truths) = instance(&mut rng);
        let width = truths[0].len();
        let mut perm: Vec<usize> = (0..width).collect();
        for i in (1..width).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let permute_s = |s: &Vec<f64>| perm.iter().map(|&l| s[l]).collect::<Vec<_>>();
        let permute_t = |t: &LabelVector| LabelVector::new(perm.iter().map(|&l| t.bits()[l]).collect());
        let ps: Vec<Vec<f64>> = scores.iter().map(permute_s).collect();
        let pt: Vec<LabelVector> = truths.iter().map(permute_t).collect();
        let pred = |s: &[Vec<f64>]| s.iter().map(|r| threshold_predictions(r, 0.45)).collect::<Vec<_>>();
        let (a_mi, a_ma) = micro_macro(&confusion(&pred(&scores), &truths).unwrap());
        let (b_mi, b_ma) = micro_macro(&confusion(&pred(&ps), &pt).unwrap());
        prop_assert_eq!(a_mi, b_mi);
        prop_assert!((a_ma.f1 - b_ma.f1).abs() < 1e-12);
        if let (Ok(x), Ok(y)) = (auc(&scores, &truths, AucMode::Micro), auc(&ps, &pt, AucMode::Micro)) {
            prop_assert!((x.value - y.value).abs() < 1e-12);
        }
    }

    #[test]
    fn hits_at_k_never_decrease(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scores, truths) = instance(&mut rng);
        let width = truths[0].len();
        let mut prev = 0.0;
        for k in 1..=width {
            let hits = precision_at_k(&scores, &truths, k).unwrap() * k as f64;
            prop_assert!(hits >= prev - 1e-12);
            prev = hits;
        }
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded(a in proptest::collection::btree_set(0usize..20, 0..8),
                                        b in proptest::collection::btree_set(0usize..20, 0..8)) {
        let a: Vec<usize> = a.into_iter().collect();
        let b: Vec<usize> = b.into_iter().collect();
        let j = jaccard(&a, &b);
        prop_assert_eq!(j, jaccard(&b, &a));
        prop_assert!((0.0..=1.0).contains(&j));
    }
}
