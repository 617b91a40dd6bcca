use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::autodiff::{sigmoid, softplus};
use crate::error::{Error, Result};

const MAX_NOISE_DRAWS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbowConfig {
    pub dim: usize,
    /// Context items taken on each side of the center.
    pub window: usize,
    /// Items seen fewer times are dropped before training.
    pub min_count: u64,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to 1e-4 of itself.
    pub learning_rate: f64,
    /// Shuffle each sequence before every epoch (for unordered label sets).
    pub shuffle_items: bool,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            min_count: 0,
            negatives: 5,
            epochs: 30,
            learning_rate: 0.025,
            shuffle_items: false,
            seed: 1,
        }
    }
}

impl CbowConfig {
    /// Settings for label sets: shuffled order and a window wide enough
    /// that every pair within a set is a context pair.
    pub fn for_label_sets(dim: usize, sequences: &[Vec<String>], seed: u64) -> Self {
        let widest = sequences.iter().map(Vec::len).max().unwrap_or(1);
        Self {
            dim,
            window: widest.max(1),
            shuffle_items: true,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dim", "must be positive"));
        }
        if self.window == 0 {
            return Err(Error::config("window", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CbowOutcome {
    pub table: EmbeddingTable,
    /// Mean sampled objective per center position, one entry per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Trains input vectors with CBOW and negative sampling.
///
/// Items are indexed by descending frequency, then ascending string.
/// Sequences with a single surviving item contribute no training pairs, but
/// their items still get a row.
pub fn train_cbow(sequences: &[Vec<String>], config: &CbowConfig) -> Result<CbowOutcome> {
    config.validate()?;
    if sequences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for s in sequences {
        for item in s {
            *freq.entry(item.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = freq.into_iter().filter(|&(_, c)| c >= config.min_count).collect();
    if kept.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = kept.iter().enumerate().map(|(i, &(s, _))| (s, i)).collect();
    let mut encoded: Vec<Vec<usize>> = sequences
        .iter()
        .map(|s| s.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
        .collect();

    let d = config.dim;
    let n = kept.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 0.5 / d as f64;
    let mut syn0: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-bound..bound)).collect();
    let mut syn1 = vec![0.0; n * d];
    let noise = WeightedIndex::new(kept.iter().map(|&(_, c)| (c as f64).powf(0.75)))
        .map_err(|e| Error::config("sequences", e.to_string()))?;

    let positions_per_epoch: usize = encoded.iter().map(Vec::len).sum();
    let total = (positions_per_epoch * config.epochs).max(1) as f64;
    let mut processed = 0usize;
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut h = vec![0.0; d];
    let mut grad_h = vec![0.0; d];

    for _ in 0..config.epochs {
        if config.shuffle_items {
            for s in &mut encoded {
                s.shuffle(&mut rng);
            }
        }
        let mut loss = 0.0;
        let mut centers = 0usize;
        for seq in &encoded {
            for (i, &center) in seq.iter().enumerate() {
                let lr = config.learning_rate * (1.0 - processed as f64 / total).max(1e-4);
                processed += 1;
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window + 1).min(seq.len());
                let context: Vec<usize> = (lo..hi).filter(|&j| j != i).map(|j| seq[j]).collect();
                if context.is_empty() {
                    continue;
                }
                centers += 1;
                h.iter_mut().for_each(|x| *x = 0.0);
                for &c in &context {
                    for (hk, v) in h.iter_mut().zip(&syn0[c * d..(c + 1) * d]) {
                        *hk += v;
                    }
                }
                let inv = 1.0 / context.len() as f64;
                h.iter_mut().for_each(|x| *x *= inv);
                grad_h.iter_mut().for_each(|x| *x = 0.0);

                for k in 0..=config.negatives {
                    let (target, label) = if k == 0 {
                        (center, 1.0)
                    } else {
                        // Redraw noise that lands inside the window. Label universes
                        // are small enough that in-set negatives would otherwise
                        // push co-occurring labels apart.
                        let mut t = noise.sample(&mut rng);
                        let mut tries = 1;
                        while (t == center || context.contains(&t)) && tries < MAX_NOISE_DRAWS {
                            t = noise.sample(&mut rng);
                            tries += 1;
                        }
                        if t == center || context.contains(&t) {
                            continue;
                        }
                        (t, 0.0)
                    };
                    let out = &mut syn1[target * d..(target + 1) * d];
                    let f: f64 = h.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                    // -log σ(f) for the center, -log σ(-f) for noise
                    loss += if label == 1.0 { softplus(-f) } else { softplus(f) };
                    let g = (label - sigmoid(f)) * lr;
                    for ((gh, o), hk) in grad_h.iter_mut().zip(out.iter_mut()).zip(&h) {
                        *gh += g * *o;
                        *o += g * hk;
                    }
                }
                for &c in &context {
                    for (v, gh) in syn0[c * d..(c + 1) * d].iter_mut().zip(&grad_h) {
                        *v += gh;
                    }
                }
            }
        }
        epoch_loss.push(if centers == 0 { 0.0 } else { loss / centers as f64 });
    }

    let items = kept.iter().map(|&(s, _)| s.to_string()).collect();
    Ok(CbowOutcome {
        table: EmbeddingTable::new(items, d, syn0)?,
        epoch_loss,
    })
}
