//! The hierarchical label-wise attention network and its two degraded
//! variants, HA-GRU and HAN.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use forward::{
    bigru, bind, forward, forward_tape, gru_cell, predict_proba, project, sentence_attention, word_attention,
    AttentionRecord, BiGruVars, ForwardOutput, GruVars, ParamVars, SentenceAttention, WordAttention,
};
pub use params::{init_params, BiGruParams, GruParams, ModelParams, ParamKind};

use serde::{Deserialize, Serialize};

use crate::corpus::{EncodeConfig, Segmentation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Label-wise word and sentence attention.
    #[default]
    Hlan,
    /// Shared word attention, label-wise sentence attention.
    Hagru,
    /// Shared attention at both levels.
    Han,
}

impl Variant {
    /// Rows of the word-attention context matrix.
    pub fn word_contexts(self, num_labels: usize) -> usize {
        match self {
            Variant::Hlan => num_labels,
            Variant::Hagru | Variant::Han => 1,
        }
    }

    /// Rows of the sentence-attention context matrix.
    pub fn sentence_contexts(self, num_labels: usize) -> usize {
        match self {
            Variant::Hlan | Variant::Hagru => num_labels,
            Variant::Han => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Hlan => "hlan",
            Variant::Hagru => "hagru",
            Variant::Han => "han",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hlan" => Ok(Variant::Hlan),
            "hagru" | "ha-gru" => Ok(Variant::Hagru),
            "han" => Ok(Variant::Han),
            other => Err(format!("unknown variant {other:?} (expected hlan, hagru or han)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_labels: usize,
    pub vocab_size: usize,
    /// Word embedding width.
    pub d_e: usize,
    /// GRU hidden width per direction.
    pub d_h: usize,
    /// Word-attention context width.
    pub d_w: usize,
    /// Sentence-attention context width.
    pub d_s: usize,
    /// Sentences per document.
    pub sentences: usize,
    /// Tokens per sentence.
    pub sentence_len: usize,
    pub variant: Variant,
    pub le_init: bool,
    /// Probability cutoff for assigning a label.
    pub threshold: f64,
    pub segmentation: Segmentation,
    /// Dropout rate on the document representation during training.
    pub dropout: f64,
}

impl ModelConfig {
    /// Defaults: 100-d words, 100-d GRUs, square attention maps, 100 × 25 grid.
    pub fn new(num_labels: usize, vocab_size: usize) -> Self {
        Self {
            num_labels,
            vocab_size,
            d_e: 100,
            d_h: 100,
            d_w: 200,
            d_s: 400,
            sentences: 100,
            sentence_len: 25,
            variant: Variant::Hlan,
            le_init: true,
            threshold: 0.5,
            segmentation: Segmentation::Chunk,
            dropout: 0.1,
        }
    }

    /// Sets `d_h` and the attention widths that follow from it.
    pub fn with_hidden(mut self, d_h: usize) -> Self {
        self.d_h = d_h;
        self.d_w = 2 * d_h;
        self.d_s = 4 * d_h;
        self
    }

    /// Width of the document representation.
    pub fn doc_dim(&self) -> usize {
        4 * self.d_h
    }

    pub fn encode_config(&self) -> EncodeConfig {
        EncodeConfig {
            sentences: self.sentences,
            sentence_len: self.sentence_len,
            segmentation: self.segmentation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("num_labels", self.num_labels),
            ("vocab_size", self.vocab_size),
            ("d_e", self.d_e),
            ("d_h", self.d_h),
            ("d_w", self.d_w),
            ("d_s", self.d_s),
            ("sentences", self.sentences),
            ("sentence_len", self.sentence_len),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config("threshold", "must lie strictly between 0 and 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        Ok(())
    }
}
