//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use hlan::autodiff::{sigmoid, Tensor};
use hlan::corpus::{EncodedDocument, LabelVector, PAD};
use hlan::model::{GruParams, ModelConfig, ModelParams, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// vocab 50, d_e 8, d_h 8, d_w 16, d_s 16, |Y| 4, 3 × 5 grid.
pub fn tiny_config(variant: Variant) -> ModelConfig {
    let mut c = ModelConfig::new(4, 50);
    c.d_e = 8;
    c.d_h = 8;
    c.d_w = 16;
    c.d_s = 16;
    c.sentences = 3;
    c.sentence_len = 5;
    c.variant = variant;
    c.le_init = false;
    c.dropout = 0.0;
    c
}

/// Every parameter uniform in `[-scale, scale]`.
pub fn random_params(config: &ModelConfig, seed: u64, scale: f64) -> ModelParams {
    let mut r = rng(seed);
    let mut p = ModelParams::zeros(config);
    for t in p.tensors_mut() {
        for v in t.data_mut() {
            *v = r.gen_range(-scale..=scale);
        }
    }
    p
}

/// A document with random live prefixes; with `gaps`, masks may also have
/// holes in the middle of a sentence and dead sentences between live ones.
pub fn random_doc(config: &ModelConfig, seed: u64, gaps: bool) -> EncodedDocument {
    let mut r = rng(seed);
    let (n, nt) = (config.sentences, config.sentence_len);
    let live_sentences = r.gen_range(1..=n);
    let mut grid = vec![PAD; n * nt];
    let mut token_mask = vec![false; n * nt];
    let mut sentence_mask = vec![false; n];
    for s in 0..live_sentences {
        if gaps && s > 0 && r.gen_bool(0.2) {
            continue;
        }
        let len = r.gen_range(1..=nt);
        let mut any = false;
        for t in 0..len {
            if gaps && t > 0 && r.gen_bool(0.2) {
                continue;
            }
            grid[s * nt + t] = r.gen_range(2..config.vocab_size);
            token_mask[s * nt + t] = true;
            any = true;
        }
        sentence_mask[s] = any;
    }
    let target = LabelVector::new((0..config.num_labels).map(|_| u8::from(r.gen_bool(0.4))).collect());
    EncodedDocument {
        id: format!("doc{seed}"),
        sentences: n,
        sentence_len: nt,
        grid,
        sentence_mask,
        token_mask,
        target,
        surface: Vec::new(),
    }
}

pub fn flatten(params: &ModelParams) -> Vec<f64> {
    params
        .entries()
        .iter()
        .flat_map(|(_, _, t)| t.data().to_vec())
        .collect()
}

pub fn unflatten(config: &ModelConfig, flat: &[f64]) -> ModelParams {
    let mut p = ModelParams::zeros(config);
    let mut offset = 0;
    for t in p.tensors_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    assert_eq!(offset, flat.len());
    p
}

fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    (0..w.cols())
        .map(|j| (0..w.rows()).map(|k| x[k] * w.get(k, j)).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scalar-loop GRU step written straight from the update equations.
pub fn gru_step_ref(e: &[f64], h: &[f64], g: &GruParams) -> Vec<f64> {
    let d = h.len();
    let xr = vec_mat(e, &g.w_er);
    let xz = vec_mat(e, &g.w_ez);
    let xh = vec_mat(e, &g.w_eh);
    let hr = vec_mat(h, &g.w_hr);
    let hz = vec_mat(h, &g.w_hz);
    let r: Vec<f64> = (0..d).map(|j| sigmoid(xr[j] + hr[j] + g.b_r.data()[j])).collect();
    let z: Vec<f64> = (0..d).map(|j| sigmoid(xz[j] + hz[j] + g.b_z.data()[j])).collect();
    let rh: Vec<f64> = (0..d).map(|j| r[j] * h[j]).collect();
    let hh = vec_mat(&rh, &g.w_hh);
    (0..d)
        .map(|j| (1.0 - z[j]) * h[j] + z[j] * (xh[j] + hh[j]).tanh())
        .collect()
}

/// Bi-GRU over the given inputs (no masking; callers pass only live steps).
fn bigru_ref(xs: &[Vec<f64>], fwd: &GruParams, bwd: &GruParams) -> Vec<Vec<f64>> {
    let d = fwd.w_hr.rows();
    let mut f = Vec::with_capacity(xs.len());
    let mut h = vec![0.0; d];
    for x in xs {
        h = gru_step_ref(x, &h, fwd);
        f.push(h.clone());
    }
    let mut b = vec![Vec::new(); xs.len()];
    let mut h = vec![0.0; d];
    for (i, x) in xs.iter().enumerate().rev() {
        h = gru_step_ref(x, &h, bwd);
        b[i] = h.clone();
    }
    f.into_iter()
        .zip(b)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect()
}

fn softmax(s: &[f64]) -> Vec<f64> {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

fn weighted_sum(alpha: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; rows[0].len()];
    for (a, r) in alpha.iter().zip(rows) {
        for (o, v) in out.iter_mut().zip(r) {
            *o += a * v;
        }
    }
    out
}

/// Straight-line reference forward pass returning label probabilities.
pub fn reference_forward(doc: &EncodedDocument, p: &ModelParams, c: &ModelConfig) -> Vec<f64> {
    let nt = doc.sentence_len;
    let lw = c.variant.word_contexts(c.num_labels);
    let ls = c.variant.sentence_contexts(c.num_labels);
    // per live sentence, one attended vector per word context
    let mut sent_vecs: Vec<Vec<Vec<f64>>> = Vec::new();
    for s in 0..doc.sentences {
        let pos: Vec<usize> = (0..nt).filter(|&t| doc.is_token_live(s, t)).collect();
        if !doc.sentence_mask[s] || pos.is_empty() {
            continue;
        }
        let xs: Vec<Vec<f64>> = pos
            .iter()
            .map(|&t| p.word_embedding.row_slice(doc.token(s, t)).to_vec())
            .collect();
        let hs = bigru_ref(&xs, &p.word_gru.fwd, &p.word_gru.bwd);
        let vs: Vec<Vec<f64>> = hs
            .iter()
            .map(|h| {
                vec_mat(h, &p.word_proj)
                    .iter()
                    .zip(p.word_bias.data())
                    .map(|(a, b)| (a + b).tanh())
                    .collect()
            })
            .collect();
        let per_ctx = (0..lw)
            .map(|k| {
                let scores: Vec<f64> = vs.iter().map(|v| dot(p.word_context.row_slice(k), v)).collect();
                weighted_sum(&softmax(&scores), &hs)
            })
            .collect();
        sent_vecs.push(per_ctx);
    }
    let d4 = c.doc_dim();
    let docs: Vec<Vec<f64>> = if sent_vecs.is_empty() {
        vec![vec![0.0; d4]; ls]
    } else {
        let states: Vec<Vec<Vec<f64>>> = (0..lw)
            .map(|row| {
                let xs: Vec<Vec<f64>> = sent_vecs.iter().map(|v| v[row].clone()).collect();
                bigru_ref(&xs, &p.sentence_gru.fwd, &p.sentence_gru.bwd)
            })
            .collect();
        (0..ls)
            .map(|k| {
                let s = &states[if lw == ls { k } else { 0 }];
                let scores: Vec<f64> = s
                    .iter()
                    .map(|sr| {
                        let u: Vec<f64> = vec_mat(sr, &p.sentence_proj)
                            .iter()
                            .zip(p.sentence_bias.data())
                            .map(|(a, b)| (a + b).tanh())
                            .collect();
                        dot(p.sentence_context.row_slice(k), &u)
                    })
                    .collect();
                weighted_sum(&softmax(&scores), s)
            })
            .collect()
    };
    (0..c.num_labels)
        .map(|l| {
            let d = &docs[if ls == 1 { 0 } else { l }];
            sigmoid(dot(p.projection.row_slice(l), d) + p.bias.data()[l])
        })
        .collect()
}
