use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Named rows of a `count × dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    items: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
    normalized: bool,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Returns `v / ‖v‖`, or `None` for the zero vector.
pub fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0).then(|| v.iter().map(|x| x / norm).collect())
}

impl EmbeddingTable {
    pub fn new(items: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dim", "must be positive"));
        }
        if data.len() != items.len() * dim {
            return Err(Error::format(
                "embedding table",
                format!("{} values for {} items of dimension {dim}", data.len(), items.len()),
            ));
        }
        let index: HashMap<String, usize> = items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        if index.len() != items.len() {
            return Err(Error::format("embedding table", "duplicate items"));
        }
        Ok(Self {
            items,
            index,
            dim,
            data,
            normalized: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn index_of(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, item: &str) -> Option<&[f64]> {
        self.index_of(item).map(|i| self.row(i))
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Scales every row to unit L2 norm.
    pub fn normalize_unit(mut self) -> Result<Self> {
        for i in 0..self.len() {
            let u = unit(self.row(i)).ok_or_else(|| Error::ZeroRow(self.items[i].clone()))?;
            self.row_mut(i).copy_from_slice(&u);
        }
        self.normalized = true;
        Ok(self)
    }

    /// The `k` items most cosine-similar to `item`, excluding `item` itself;
    /// ties go to the lexicographically smaller item.
    pub fn top_k_similar(&self, item: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let q = self
            .index_of(item)
            .ok_or_else(|| Error::UnknownItem(item.to_string()))?;
        if k >= self.len() {
            return Err(Error::config("k", format!("must be below table size {}", self.len())));
        }
        let query = self.row(q);
        let mut scored: Vec<(&str, f64)> = (0..self.len())
            .filter(|&i| i != q)
            .map(|i| (self.items[i].as_str(), cosine(query, self.row(i))))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(b.0))
        });
        Ok(scored.into_iter().take(k).map(|(s, c)| (s.to_string(), c)).collect())
    }

    /// Header `dim<TAB>count`, then `item<TAB>v1 v2 … vd` per row.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\t{}\n", self.dim, self.len());
        for (i, item) in self.items.iter().enumerate() {
            out.push_str(item);
            out.push('\t');
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("embedding file", "missing header"))?;
        let (dim, count) = header
            .split_once('\t')
            .and_then(|(d, c)| Some((d.parse::<usize>().ok()?, c.parse::<usize>().ok()?)))
            .ok_or_else(|| Error::format("embedding file", "header must be dim<TAB>count"))?;
        let mut items = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let ctx = || format!("embedding file line {}", i + 2);
            let (item, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(ctx(), "missing tab"))?;
            let before = data.len();
            for v in values.split(' ') {
                data.push(v.parse::<f64>().map_err(|e| Error::format(ctx(), e))?);
            }
            if data.len() - before != dim {
                return Err(Error::Dimension {
                    layer: format!("embedding row {item}"),
                    expected: dim,
                    found: data.len() - before,
                });
            }
            items.push(item.to_string());
        }
        if items.len() != count {
            return Err(Error::format(
                "embedding file",
                format!("header says {count} rows, found {}", items.len()),
            ));
        }
        let mut table = Self::new(items, dim, data)?;
        table.normalized = (0..table.len()).all(|i| {
            let n = table.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            (n - 1.0).abs() <= 1e-9
        });
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
