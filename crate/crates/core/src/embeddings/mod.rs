//! CBOW embeddings for words and label sets, plus cosine utilities.

mod cbow;
mod table;

pub use cbow::{train_cbow, CbowConfig, CbowOutcome};
pub use table::{cosine, unit, EmbeddingTable};

/// Label sets of a corpus as CBOW sequences.
pub fn label_sequences(docs: &[crate::corpus::RawDocument]) -> Vec<Vec<String>> {
    docs.iter().map(|d| d.labels.clone()).collect()
}

/// Token streams of a corpus as CBOW sequences.
pub fn token_sequences(docs: &[crate::corpus::RawDocument]) -> Vec<Vec<String>> {
    docs.iter().map(|d| crate::corpus::tokenize(&d.text)).collect()
}
