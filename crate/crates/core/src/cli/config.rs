use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Segmentation, SynthConfig};
use crate::error::{Error, Result};
use crate::explainer::{HighlightOptions, WordScore, DEFAULT_MU, DEFAULT_SENTENCE_THRESHOLD, DEFAULT_WORD_THRESHOLD};
use crate::model::{ModelConfig, Variant};
use crate::trainer::TrainConfig;

/// Which corpus split a command reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    #[default]
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Corpus locations. Explicit split paths win over `dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding `train.jsonl`, `valid.jsonl` and `test.jsonl`.
    pub dir: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Directory of pre-trained `words.<d>.txt` / `labels.<d>.txt` tables.
    /// Missing tables are trained on the fly.
    pub embeddings: Option<PathBuf>,
    /// Vocabulary cutoff on training-split token counts.
    pub min_count: u64,
}

impl DataSection {
    pub fn split_path(&self, split: Split) -> Result<PathBuf> {
        let explicit = match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        };
        match (explicit, &self.dir) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(d)) => Ok(d.join(format!("{}.jsonl", split.name()))),
            (None, None) => Err(Error::config(
                format!("data.{}", split.name()),
                "no corpus path; set data.dir or the split path",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub word_epochs: usize,
    pub label_epochs: usize,
    /// Pre-train word vectors when no table is supplied; otherwise the
    /// embedding layer starts from its random draw.
    pub pretrain_words: bool,
}

impl Default for EmbedSection {
    fn default() -> Self {
        Self {
            word_epochs: 5,
            label_epochs: 30,
            pretrain_words: true,
        }
    }
}

/// Model settings; unset fields fall back to the library defaults, and only
/// set fields are checked against a loaded checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_e: Option<usize>,
    pub d_h: Option<usize>,
    pub d_w: Option<usize>,
    pub d_s: Option<usize>,
    pub sentences: Option<usize>,
    pub sentence_len: Option<usize>,
    pub variant: Option<Variant>,
    pub le_init: Option<bool>,
    pub threshold: Option<f64>,
    pub segmentation: Option<Segmentation>,
    pub dropout: Option<f64>,
}

impl ModelSection {
    /// `d_w` and `d_s` default to `2 d_h` and `4 d_h`.
    pub fn resolve(&self, num_labels: usize, vocab_size: usize) -> ModelConfig {
        let base = ModelConfig::new(num_labels, vocab_size);
        let d_h = self.d_h.unwrap_or(base.d_h);
        let base = base.with_hidden(d_h);
        ModelConfig {
            d_e: self.d_e.unwrap_or(base.d_e),
            d_w: self.d_w.unwrap_or(base.d_w),
            d_s: self.d_s.unwrap_or(base.d_s),
            sentences: self.sentences.unwrap_or(base.sentences),
            sentence_len: self.sentence_len.unwrap_or(base.sentence_len),
            variant: self.variant.unwrap_or(base.variant),
            le_init: self.le_init.unwrap_or(base.le_init),
            threshold: self.threshold.unwrap_or(base.threshold),
            segmentation: self.segmentation.unwrap_or(base.segmentation),
            dropout: self.dropout.unwrap_or(base.dropout),
            ..base
        }
    }

    /// Structural fields that are set here and disagree with `ckpt`.
    pub fn diff(&self, ckpt: &ModelConfig) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, ours: Option<String>, theirs: String| {
            if let Some(o) = ours {
                if o != theirs {
                    out.push(format!("{name}: config {o}, checkpoint {theirs}"));
                }
            }
        };
        let s = |v: Option<usize>| v.map(|x| x.to_string());
        check("d_e", s(self.d_e), ckpt.d_e.to_string());
        check("d_h", s(self.d_h), ckpt.d_h.to_string());
        check("d_w", s(self.d_w), ckpt.d_w.to_string());
        check("d_s", s(self.d_s), ckpt.d_s.to_string());
        check("sentences", s(self.sentences), ckpt.sentences.to_string());
        check("sentence_len", s(self.sentence_len), ckpt.sentence_len.to_string());
        check("variant", self.variant.map(|v| v.to_string()), ckpt.variant.to_string());
        check(
            "segmentation",
            self.segmentation.map(|v| format!("{v:?}").to_lowercase()),
            format!("{:?}", ckpt.segmentation).to_lowercase(),
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub split: Split,
    /// Cutoff for P@k; defaults by label count.
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub split: Split,
    pub sentence_threshold: f64,
    pub word_threshold: f64,
    pub mu: f64,
    pub word_score: WordScore,
    pub compact: bool,
    pub compact_tokens: usize,
    /// Explain only the first documents of the split.
    pub max_docs: Option<usize>,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            split: Split::Test,
            sentence_threshold: DEFAULT_SENTENCE_THRESHOLD,
            word_threshold: DEFAULT_WORD_THRESHOLD,
            mu: DEFAULT_MU,
            word_score: WordScore::Raw,
            compact: false,
            compact_tokens: 11,
            max_docs: None,
        }
    }
}

impl ExplainSection {
    pub fn highlight_options(&self) -> HighlightOptions {
        HighlightOptions {
            sentence_threshold: self.sentence_threshold,
            word_threshold: self.word_threshold,
            mu: self.mu,
            word_score: self.word_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSection {
    /// Neighbors compared per label.
    pub k: usize,
    /// Monte-Carlo draws for the random-overlap baseline.
    pub null_trials: usize,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        Self {
            k: 10,
            null_trials: 10_000,
        }
    }
}

/// Everything one command needs. File values are overridden by flags; a
/// top-level `seed` replaces the generator, training and initialization
/// seeds alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub data: DataSection,
    pub synth: SynthConfig,
    pub embed: EmbedSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub explain: ExplainSection,
    pub analyze: AnalyzeSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("config", e))
    }

    /// Seed for embedding pretraining and parameter initialization.
    pub fn base_seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    /// Pushes the top-level seed into every stage.
    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.synth.seed = s;
            self.train.seed = s;
        }
    }
}
