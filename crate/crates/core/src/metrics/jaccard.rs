use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::corpus::LabelUniverse;
use crate::embeddings::{cosine, EmbeddingTable};
use crate::error::{Error, Result};

/// `|a ∩ b| / |a ∪ b|` for index sets without duplicates; 1 when both are empty.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let inter = a.iter().filter(|x| b.contains(x)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// The `k` rows most cosine-similar to row `i` (excluding `i`), ties broken
/// by lower index.
pub fn top_k_neighbors(rows: &[&[f64]], i: usize, k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = (0..rows.len())
        .filter(|&j| j != i)
        .map(|j| (j, cosine(rows[i], rows[j])))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(j, _)| j).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardReport {
    pub k: usize,
    /// Mean Jaccard index over the compared labels.
    pub mean: f64,
    /// Population standard deviation of the per-label values.
    pub std: f64,
    pub per_label: Vec<(String, f64)>,
    /// Labels without a row in the embedding table.
    pub excluded: Vec<String>,
}

/// Compares each label's top-`k` cosine neighbors in a layer (one row per
/// label) with its neighbors in the label embedding table.
///
/// Table rows are unit-normalized exactly as parameter initialization does,
/// so a freshly initialized layer scores 1.0.
pub fn jaccard_le_analysis(
    layer: &Tensor,
    labels: &LabelUniverse,
    table: &EmbeddingTable,
    k: usize,
) -> Result<JaccardReport> {
    if layer.rows() != labels.len() {
        return Err(Error::Mismatch(format!(
            "layer has {} rows for {} labels",
            layer.rows(),
            labels.len()
        )));
    }
    if layer.cols() != table.dim() {
        return Err(Error::Dimension {
            layer: "analyzed layer".into(),
            expected: table.dim(),
            found: layer.cols(),
        });
    }
    let table = if table.is_normalized() {
        table.clone()
    } else {
        table.clone().normalize_unit()?
    };
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (l, name) in labels.labels().iter().enumerate() {
        match table.vector(name) {
            Some(_) => kept.push(l),
            None => excluded.push(name.clone()),
        }
    }
    if k == 0 || k >= kept.len() {
        return Err(Error::config("k", format!("must lie in 1..{}", kept.len())));
    }
    let layer_rows: Vec<&[f64]> = kept.iter().map(|&l| layer.row_slice(l)).collect();
    let table_rows: Vec<&[f64]> = kept
        .iter()
        .map(|&l| table.vector(labels.name(l)).expect("kept labels have vectors"))
        .collect();
    let per_label: Vec<(String, f64)> = (0..kept.len())
        .map(|i| {
            let a = top_k_neighbors(&layer_rows, i, k);
            let b = top_k_neighbors(&table_rows, i, k);
            (labels.name(kept[i]).to_string(), jaccard(&a, &b))
        })
        .collect();
    let n = per_label.len() as f64;
    let mean = per_label.iter().map(|(_, v)| v).sum::<f64>() / n;
    let std = (per_label.iter().map(|(_, v)| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(JaccardReport {
        k,
        mean,
        std,
        per_label,
        excluded,
    })
}

/// Monte-Carlo mean and standard deviation of the Jaccard index between two
/// independent uniform `k`-subsets of `num_items` items.
pub fn jaccard_null(num_items: usize, k: usize, trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..trials)
        .map(|_| {
            let a = sample(&mut rng, num_items, k).into_vec();
            let b = sample(&mut rng, num_items, k).into_vec();
            jaccard(&a, &b)
        })
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, std)
}
