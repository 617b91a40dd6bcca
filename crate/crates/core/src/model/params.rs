use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, Variant};
use crate::autodiff::Tensor;
use crate::corpus::{LabelUniverse, Vocabulary, PAD};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// The word embedding matrix: trained, never L2-penalized.
    Embedding,
    Weight,
    Bias,
}

/// One direction of a GRU. Inputs are row vectors, so `W_e*` are
/// `d_in × d_h` and multiply from the right.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_er: Tensor,
    pub w_ez: Tensor,
    pub w_eh: Tensor,
    pub w_hr: Tensor,
    pub w_hz: Tensor,
    pub w_hh: Tensor,
    pub b_r: Tensor,
    pub b_z: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiGruParams {
    pub fwd: GruParams,
    pub bwd: GruParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `vocab × d_e`.
    pub word_embedding: Tensor,
    pub word_gru: BiGruParams,
    /// Input and hidden width `2 d_h`, so its states are `4 d_h` wide.
    pub sentence_gru: BiGruParams,
    /// `2 d_h × d_w` and `1 × d_w`.
    pub word_proj: Tensor,
    pub word_bias: Tensor,
    /// `4 d_h × d_s` and `1 × d_s`.
    pub sentence_proj: Tensor,
    pub sentence_bias: Tensor,
    /// One row per word-attention context.
    pub word_context: Tensor,
    /// One row per sentence-attention context.
    pub sentence_context: Tensor,
    /// `|Y| × 4 d_h`.
    pub projection: Tensor,
    /// `1 × |Y|`.
    pub bias: Tensor,
}

impl GruParams {
    fn zeros(d_in: usize, d_h: usize) -> Self {
        Self {
            w_er: Tensor::zeros(d_in, d_h),
            w_ez: Tensor::zeros(d_in, d_h),
            w_eh: Tensor::zeros(d_in, d_h),
            w_hr: Tensor::zeros(d_h, d_h),
            w_hz: Tensor::zeros(d_h, d_h),
            w_hh: Tensor::zeros(d_h, d_h),
            b_r: Tensor::zeros(1, d_h),
            b_z: Tensor::zeros(1, d_h),
        }
    }

    fn entries<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ParamKind, &'a Tensor)>) {
        use ParamKind::*;
        for (name, kind, t) in [
            ("w_er", Weight, &self.w_er),
            ("w_ez", Weight, &self.w_ez),
            ("w_eh", Weight, &self.w_eh),
            ("w_hr", Weight, &self.w_hr),
            ("w_hz", Weight, &self.w_hz),
            ("w_hh", Weight, &self.w_hh),
            ("b_r", Bias, &self.b_r),
            ("b_z", Bias, &self.b_z),
        ] {
            out.push((format!("{prefix}.{name}"), kind, t));
        }
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.extend([
            &mut self.w_er,
            &mut self.w_ez,
            &mut self.w_eh,
            &mut self.w_hr,
            &mut self.w_hz,
            &mut self.w_hh,
            &mut self.b_r,
            &mut self.b_z,
        ]);
    }
}

impl BiGruParams {
    fn zeros(d_in: usize, d_h: usize) -> Self {
        Self {
            fwd: GruParams::zeros(d_in, d_h),
            bwd: GruParams::zeros(d_in, d_h),
        }
    }
}

impl ModelParams {
    /// All-zero parameters with the shapes `config` implies.
    pub fn zeros(config: &ModelConfig) -> Self {
        let (l, dh) = (config.num_labels, config.d_h);
        Self {
            word_embedding: Tensor::zeros(config.vocab_size, config.d_e),
            word_gru: BiGruParams::zeros(config.d_e, dh),
            sentence_gru: BiGruParams::zeros(2 * dh, 2 * dh),
            word_proj: Tensor::zeros(2 * dh, config.d_w),
            word_bias: Tensor::zeros(1, config.d_w),
            sentence_proj: Tensor::zeros(4 * dh, config.d_s),
            sentence_bias: Tensor::zeros(1, config.d_s),
            word_context: Tensor::zeros(config.variant.word_contexts(l), config.d_w),
            sentence_context: Tensor::zeros(config.variant.sentence_contexts(l), config.d_s),
            projection: Tensor::zeros(l, 4 * dh),
            bias: Tensor::zeros(1, l),
        }
    }

    /// Every parameter with its dotted name, in a fixed order shared by
    /// [`ModelParams::tensors_mut`] and the checkpoint layout.
    pub fn entries(&self) -> Vec<(String, ParamKind, &Tensor)> {
        use ParamKind::*;
        let mut out = vec![("word_embedding".to_string(), Embedding, &self.word_embedding)];
        self.word_gru.fwd.entries("word_gru.fwd", &mut out);
        self.word_gru.bwd.entries("word_gru.bwd", &mut out);
        self.sentence_gru.fwd.entries("sentence_gru.fwd", &mut out);
        self.sentence_gru.bwd.entries("sentence_gru.bwd", &mut out);
        for (name, kind, t) in [
            ("word_attention.w", Weight, &self.word_proj),
            ("word_attention.b", Bias, &self.word_bias),
            ("sentence_attention.w", Weight, &self.sentence_proj),
            ("sentence_attention.b", Bias, &self.sentence_bias),
            ("word_attention.context", Weight, &self.word_context),
            ("sentence_attention.context", Weight, &self.sentence_context),
            ("projection.w", Weight, &self.projection),
            ("projection.b", Bias, &self.bias),
        ] {
            out.push((name.to_string(), kind, t));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.word_embedding];
        self.word_gru.fwd.tensors_mut(&mut out);
        self.word_gru.bwd.tensors_mut(&mut out);
        self.sentence_gru.fwd.tensors_mut(&mut out);
        self.sentence_gru.bwd.tensors_mut(&mut out);
        out.extend([
            &mut self.word_proj,
            &mut self.word_bias,
            &mut self.sentence_proj,
            &mut self.sentence_bias,
            &mut self.word_context,
            &mut self.sentence_context,
            &mut self.projection,
            &mut self.bias,
        ]);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.entries().iter().map(|(_, _, t)| t.len()).sum()
    }

    /// Checks every tensor against the shapes `config` implies.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = Self::zeros(config);
        for ((name, _, got), (_, _, want)) in self.entries().into_iter().zip(expected.entries()) {
            if got.shape() != want.shape() {
                return Err(Error::Mismatch(format!(
                    "parameter {name} has shape {:?}, config implies {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        Ok(())
    }
}

fn xavier_fill(t: &mut Tensor, rng: &mut ChaCha8Rng) {
    let (fan_in, fan_out) = (t.rows(), t.cols());
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = rng.gen_range(-a..=a);
    }
}

fn table_for<'a>(tables: &'a [EmbeddingTable], dim: usize, layer: &str) -> Result<&'a EmbeddingTable> {
    tables.iter().find(|t| t.dim() == dim).ok_or_else(|| Error::Dimension {
        layer: layer.to_string(),
        expected: dim,
        found: tables.first().map_or(0, EmbeddingTable::dim),
    })
}

/// Overwrites the rows of `target` whose label has a vector in `table`.
fn copy_label_rows(target: &mut Tensor, table: &EmbeddingTable, labels: &LabelUniverse) -> Result<()> {
    let table = if table.is_normalized() {
        table.clone()
    } else {
        table.clone().normalize_unit()?
    };
    for (l, name) in labels.labels().iter().enumerate() {
        if let Some(v) = table.vector(name) {
            target.row_slice_mut(l).copy_from_slice(v);
        }
    }
    Ok(())
}

/// Xavier-uniform initialization with zero biases, optionally seeded from
/// pre-trained tables.
///
/// Word vectors are copied by token; the padding row is zero and tokens
/// missing from `word_table` keep their Xavier draw. With `le_init`, the
/// label-wise rows of the projection and of every label-wise context matrix
/// are copied from the unit-normalized label table of matching width;
/// labels missing from that table keep their Xavier draw. The random draws
/// do not depend on the tables, so toggling `le_init` only changes the
/// copied rows.
pub fn init_params(
    config: &ModelConfig,
    vocab: &Vocabulary,
    labels: &LabelUniverse,
    word_table: Option<&EmbeddingTable>,
    label_tables: &[EmbeddingTable],
    seed: u64,
) -> Result<ModelParams> {
    config.validate()?;
    if vocab.len() != config.vocab_size {
        return Err(Error::Mismatch(format!(
            "vocabulary has {} entries, config says {}",
            vocab.len(),
            config.vocab_size
        )));
    }
    if labels.len() != config.num_labels {
        return Err(Error::Mismatch(format!(
            "label universe has {} labels, config says {}",
            labels.len(),
            config.num_labels
        )));
    }
    let mut params = ModelParams::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<ParamKind> = params.entries().into_iter().map(|(_, k, _)| k).collect();
    for (t, kind) in params.tensors_mut().into_iter().zip(entries) {
        if kind != ParamKind::Bias {
            xavier_fill(t, &mut rng);
        }
    }

    params.word_embedding.row_slice_mut(PAD).fill(0.0);
    if let Some(table) = word_table {
        if table.dim() != config.d_e {
            return Err(Error::Dimension {
                layer: "word embedding".into(),
                expected: config.d_e,
                found: table.dim(),
            });
        }
        for (i, token) in vocab.corpus_tokens() {
            if let Some(v) = table.vector(token) {
                params.word_embedding.row_slice_mut(i).copy_from_slice(v);
            }
        }
    }

    if config.le_init {
        let proj = table_for(label_tables, config.doc_dim(), "projection W")?;
        copy_label_rows(&mut params.projection, proj, labels)?;
        if config.variant == Variant::Hlan {
            let t = table_for(label_tables, config.d_w, "word context V_w")?;
            copy_label_rows(&mut params.word_context, t, labels)?;
        }
        if config.variant != Variant::Han {
            let t = table_for(label_tables, config.d_s, "sentence context V_s")?;
            copy_label_rows(&mut params.sentence_context, t, labels)?;
        }
    }
    Ok(params)
}
