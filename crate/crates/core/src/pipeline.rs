//! Glue between corpora, embedding pretraining and model initialization.

use crate::corpus::{
    build_vocab, check_unique_ids, encode, EncodeConfig, EncodedDocument, LabelUniverse, RawDocument, Vocabulary,
};
use crate::embeddings::{label_sequences, token_sequences, train_cbow, CbowConfig, EmbeddingTable};
use crate::error::Result;
use crate::model::{ModelConfig, Variant};

/// Encoded splits sharing one vocabulary (built on the training split) and
/// one label universe (all splits).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub labels: LabelUniverse,
    pub train: Vec<EncodedDocument>,
    pub valid: Vec<EncodedDocument>,
    pub test: Vec<EncodedDocument>,
}

pub fn encode_all(
    docs: &[RawDocument],
    vocab: &Vocabulary,
    labels: &LabelUniverse,
    config: &EncodeConfig,
) -> Result<Vec<EncodedDocument>> {
    docs.iter().map(|d| encode(d, vocab, labels, config)).collect()
}

impl Dataset {
    pub fn prepare(
        train: &[RawDocument],
        valid: &[RawDocument],
        test: &[RawDocument],
        min_count: u64,
        config: &EncodeConfig,
    ) -> Result<Self> {
        check_unique_ids(train.iter().chain(valid).chain(test))?;
        let vocab = build_vocab(train, min_count)?;
        let labels = LabelUniverse::from_documents([train, valid, test]);
        Ok(Self {
            train: encode_all(train, &vocab, &labels, config)?,
            valid: encode_all(valid, &vocab, &labels, config)?,
            test: encode_all(test, &vocab, &labels, config)?,
            vocab,
            labels,
        })
    }
}

/// Widths of the label tables that label-embedding initialization reads:
/// the projection width plus each label-wise attention width.
pub fn label_table_dims(config: &ModelConfig) -> Vec<usize> {
    let mut dims = vec![config.doc_dim()];
    if config.variant == Variant::Hlan {
        dims.push(config.d_w);
    }
    if config.variant != Variant::Han {
        dims.push(config.d_s);
    }
    dims.sort_unstable();
    dims.dedup();
    dims
}

/// One CBOW table per width, trained on the label sets of `docs`.
pub fn train_label_tables(
    docs: &[RawDocument],
    dims: &[usize],
    epochs: usize,
    seed: u64,
) -> Result<Vec<EmbeddingTable>> {
    let seqs = label_sequences(docs);
    dims.iter()
        .map(|&d| {
            let cfg = CbowConfig {
                epochs,
                ..CbowConfig::for_label_sets(d, &seqs, seed)
            };
            Ok(train_cbow(&seqs, &cfg)?.table)
        })
        .collect()
}

/// Word vectors for tokens seen at least `min_count` times in `docs`.
pub fn train_word_table(
    docs: &[RawDocument],
    dim: usize,
    min_count: u64,
    epochs: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let cfg = CbowConfig {
        dim,
        min_count,
        epochs,
        seed,
        ..CbowConfig::default()
    };
    Ok(train_cbow(&token_sequences(docs), &cfg)?.table)
}
