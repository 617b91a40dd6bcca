//! Corpus ingestion and encoding into fixed sentence grids.

mod encode;
mod io;
mod synthetic;
mod tokenize;
mod vocab;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use encode::{encode, segment, EncodeConfig, EncodedDocument, LabelVector, Segmentation};
pub use io::{read_corpus, read_provenance, write_corpus, write_provenance};
pub use synthetic::{generate_synthetic, ProvenanceRecord, SignalSite, SynthConfig, SyntheticCorpus};
pub use tokenize::{tokenize, NUM_TOKEN};
pub use vocab::{build_vocab, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use crate::error::{Error, Result};

/// One corpus record: free text and its label set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    pub labels: Vec<String>,
}

impl RawDocument {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        labels: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        let labels: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        Self {
            id: id.into(),
            text: text.into(),
            labels: labels.into_iter().collect(),
        }
    }
}

/// Lexicographically ordered label set; the order fixes multi-hot indexing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct LabelUniverse {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for LabelUniverse {
    fn from(labels: Vec<String>) -> Self {
        Self::new(labels)
    }
}

impl From<LabelUniverse> for Vec<String> {
    fn from(u: LabelUniverse) -> Self {
        u.labels
    }
}

impl LabelUniverse {
    pub fn new(labels: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        let labels: Vec<String> = set.into_iter().collect();
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Self { labels, index }
    }

    /// Union of the label sets of every document in `splits`.
    pub fn from_documents<'a>(splits: impl IntoIterator<Item = &'a [RawDocument]>) -> Self {
        Self::new(
            splits
                .into_iter()
                .flat_map(|docs| docs.iter().flat_map(|d| d.labels.iter().cloned())),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Multi-hot target for a label set; fails listing every unknown label.
    pub fn multi_hot(&self, labels: &[String]) -> Result<LabelVector> {
        let mut bits = vec![0u8; self.len()];
        let mut unknown = Vec::new();
        for l in labels {
            match self.index_of(l) {
                Some(i) => bits[i] = 1,
                None => unknown.push(l.clone()),
            }
        }
        if unknown.is_empty() {
            Ok(LabelVector::new(bits))
        } else {
            Err(Error::UnknownLabels(unknown))
        }
    }
}

/// Fails on the first repeated document id.
pub fn check_unique_ids<'a>(docs: impl IntoIterator<Item = &'a RawDocument>) -> Result<()> {
    let mut seen = HashSet::new();
    for d in docs {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::DuplicateId(d.id.clone()));
        }
    }
    Ok(())
}
