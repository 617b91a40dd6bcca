use rand::{Rng, RngCore};

use super::{GruParams, ModelConfig, ModelParams, Variant};
use crate::autodiff::{sigmoid, Tape, Tensor, Var};
use crate::corpus::EncodedDocument;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_er: Var,
    pub w_ez: Var,
    pub w_eh: Var,
    pub w_hr: Var,
    pub w_hz: Var,
    pub w_hh: Var,
    pub b_r: Var,
    pub b_z: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct BiGruVars {
    pub fwd: GruVars,
    pub bwd: GruVars,
}

/// [`ModelParams`] recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub word_embedding: Var,
    pub word_gru: BiGruVars,
    pub sentence_gru: BiGruVars,
    pub word_proj: Var,
    pub word_bias: Var,
    pub sentence_proj: Var,
    pub sentence_bias: Var,
    pub word_context: Var,
    pub sentence_context: Var,
    pub projection: Var,
    pub bias: Var,
}

impl GruVars {
    fn list(&self) -> [Var; 8] {
        [
            self.w_er, self.w_ez, self.w_eh, self.w_hr, self.w_hz, self.w_hh, self.b_r, self.b_z,
        ]
    }
}

impl ParamVars {
    /// Vars in [`ModelParams::entries`] order.
    pub fn list(&self) -> Vec<Var> {
        let mut out = vec![self.word_embedding];
        for g in [
            self.word_gru.fwd,
            self.word_gru.bwd,
            self.sentence_gru.fwd,
            self.sentence_gru.bwd,
        ] {
            out.extend(g.list());
        }
        out.extend([
            self.word_proj,
            self.word_bias,
            self.sentence_proj,
            self.sentence_bias,
            self.word_context,
            self.sentence_context,
            self.projection,
            self.bias,
        ]);
        out
    }
}

/// Records `params` on `tape`, as differentiable leaves when `trainable`.
pub fn bind(tape: &Tape, params: &ModelParams, trainable: bool) -> ParamVars {
    let leaf = |t: &Tensor| {
        if trainable {
            tape.param(t.clone())
        } else {
            tape.constant(t.clone())
        }
    };
    let gru = |g: &GruParams| GruVars {
        w_er: leaf(&g.w_er),
        w_ez: leaf(&g.w_ez),
        w_eh: leaf(&g.w_eh),
        w_hr: leaf(&g.w_hr),
        w_hz: leaf(&g.w_hz),
        w_hh: leaf(&g.w_hh),
        b_r: leaf(&g.b_r),
        b_z: leaf(&g.b_z),
    };
    ParamVars {
        word_embedding: leaf(&params.word_embedding),
        word_gru: BiGruVars {
            fwd: gru(&params.word_gru.fwd),
            bwd: gru(&params.word_gru.bwd),
        },
        sentence_gru: BiGruVars {
            fwd: gru(&params.sentence_gru.fwd),
            bwd: gru(&params.sentence_gru.bwd),
        },
        word_proj: leaf(&params.word_proj),
        word_bias: leaf(&params.word_bias),
        sentence_proj: leaf(&params.sentence_proj),
        sentence_bias: leaf(&params.sentence_bias),
        word_context: leaf(&params.word_context),
        sentence_context: leaf(&params.sentence_context),
        projection: leaf(&params.projection),
        bias: leaf(&params.bias),
    }
}

/// One GRU update given the input projections `e W_e*` for this step.
fn gru_step(tape: &Tape, xr: Var, xz: Var, xh: Var, h: Var, g: &GruVars) -> Result<Var> {
    let r = tape.add_row(tape.add(xr, tape.matmul(h, g.w_hr)?)?, g.b_r)?;
    let r = tape.sigmoid(r)?;
    let z = tape.add_row(tape.add(xz, tape.matmul(h, g.w_hz)?)?, g.b_z)?;
    let z = tape.sigmoid(z)?;
    let cand = tape.tanh(tape.add(xh, tape.matmul(tape.mul(r, h)?, g.w_hh)?)?)?;
    let keep = tape.mul(tape.one_minus(z)?, h)?;
    Ok(tape.add(keep, tape.mul(z, cand)?)?)
}

/// `h = (1 − z) ∘ h_prev + z ∘ tanh(e W_eh + (r ∘ h_prev) W_hh)` with
/// `r`, `z` the usual sigmoid gates; rows of `e` and `h_prev` are batch items.
pub fn gru_cell(tape: &Tape, e: Var, h_prev: Var, g: &GruVars) -> Result<Var> {
    let xr = tape.matmul(e, g.w_er)?;
    let xz = tape.matmul(e, g.w_ez)?;
    let xh = tape.matmul(e, g.w_eh)?;
    gru_step(tape, xr, xz, xh, h_prev, g)
}

fn mask_column(mask: &[bool]) -> Tensor {
    Tensor::matrix(mask.len(), 1, mask.iter().map(|&m| f64::from(u8::from(m))).collect()).expect("column shape")
}

/// States of one direction at every step; masked items carry their state
/// through unchanged.
fn run_direction(
    tape: &Tape,
    inputs: Var,
    batch: usize,
    mask: &[bool],
    g: &GruVars,
    reverse: bool,
) -> Result<Vec<Var>> {
    let steps = mask.len() / batch;
    let d_h = tape.shape(g.w_hr)[0];
    let pr = tape.matmul(inputs, g.w_er)?;
    let pz = tape.matmul(inputs, g.w_ez)?;
    let ph = tape.matmul(inputs, g.w_eh)?;
    let mut h = tape.constant(Tensor::zeros(batch, d_h));
    let mut out = vec![h; steps];
    let order: Vec<usize> = if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    };
    for t in order {
        let m = &mask[t * batch..(t + 1) * batch];
        let live = m.iter().filter(|&&x| x).count();
        if live > 0 {
            let (a, b) = (t * batch, (t + 1) * batch);
            let next = gru_step(
                tape,
                tape.slice_rows(pr, a, b)?,
                tape.slice_rows(pz, a, b)?,
                tape.slice_rows(ph, a, b)?,
                h,
                g,
            )?;
            h = if live == batch {
                next
            } else {
                let col = mask_column(m);
                let inv = Tensor::matrix(batch, 1, col.data().iter().map(|x| 1.0 - x).collect())?;
                let on = tape.mul_col(next, tape.constant(col))?;
                tape.add(on, tape.mul_col(h, tape.constant(inv))?)?
            };
        }
        out[t] = h;
    }
    Ok(out)
}

/// Bidirectional GRU over a time-major batch.
///
/// `inputs` is `(steps · batch) × d_in` with row `t · batch + b` holding step
/// `t` of sequence `b`; `mask` uses the same layout. Each direction starts
/// from a zero state, and masked steps neither advance the recurrence nor
/// produce output: their rows are zero. Returns `(steps · batch) × 2 d_h`.
pub fn bigru(tape: &Tape, inputs: Var, batch: usize, mask: &[bool], bi: &BiGruVars) -> Result<Var> {
    if batch == 0 || mask.is_empty() || !mask.len().is_multiple_of(batch) || tape.shape(inputs)[0] != mask.len() {
        return Err(Error::Mismatch(format!(
            "bigru: {} input rows, {} mask entries, batch {batch}",
            tape.shape(inputs)[0],
            mask.len()
        )));
    }
    let fwd = run_direction(tape, inputs, batch, mask, &bi.fwd, false)?;
    let bwd = run_direction(tape, inputs, batch, mask, &bi.bwd, true)?;
    let d_h = tape.shape(bi.fwd.w_hr)[0];
    let mut rows = Vec::with_capacity(fwd.len());
    for (t, (f, b)) in fwd.into_iter().zip(bwd).enumerate() {
        let m = &mask[t * batch..(t + 1) * batch];
        let live = m.iter().filter(|&&x| x).count();
        rows.push(if live == batch {
            tape.concat(f, b, 1)?
        } else if live == 0 {
            tape.constant(Tensor::zeros(batch, 2 * d_h))
        } else {
            tape.mul_col(tape.concat(f, b, 1)?, tape.constant(mask_column(m)))?
        });
    }
    Ok(tape.concat_all(&rows, 0)?)
}

#[derive(Debug, Clone)]
pub struct WordAttention {
    /// Batch columns that had at least one live position.
    pub sentences: Vec<usize>,
    /// Live positions of each of those sentences.
    pub positions: Vec<Vec<usize>>,
    /// Per sentence, `len × contexts` weights (one column per context row).
    pub alpha: Vec<Var>,
    /// Per sentence, `contexts × 2 d_h` attended vectors.
    pub vectors: Vec<Var>,
}

/// Label-wise (or shared) attention over the hidden states of a batch of
/// sentences, laid out as in [`bigru`].
///
/// Scores are `V_w · tanh(h W_w + b_w)`; the softmax runs only over live
/// positions. Sentences with no live position are left out of the result.
pub fn word_attention(tape: &Tape, hidden: Var, batch: usize, mask: &[bool], pv: &ParamVars) -> Result<WordAttention> {
    let v = tape.tanh(tape.add_row(tape.matmul(hidden, pv.word_proj)?, pv.word_bias)?)?;
    let scores = tape.matmul(v, tape.transpose(pv.word_context)?)?;
    let steps = mask.len() / batch;
    let mut out = WordAttention {
        sentences: Vec::new(),
        positions: Vec::new(),
        alpha: Vec::new(),
        vectors: Vec::new(),
    };
    for b in 0..batch {
        let positions: Vec<usize> = (0..steps).filter(|&t| mask[t * batch + b]).collect();
        if positions.is_empty() {
            continue;
        }
        let rows: Vec<usize> = positions.iter().map(|&t| t * batch + b).collect();
        let alpha = tape.softmax(tape.gather_rows(scores, &rows)?, 0)?;
        let h = tape.gather_rows(hidden, &rows)?;
        out.vectors.push(tape.matmul(tape.transpose(alpha)?, h)?);
        out.alpha.push(alpha);
        out.positions.push(positions);
        out.sentences.push(b);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct SentenceAttention {
    /// `contexts × 4 d_h` document representation.
    pub doc: Var,
    /// `sentences × contexts` weights.
    pub alpha: Var,
}

/// Sentence-level encoder and attention.
///
/// `sentence_vectors[r]` is the `rows × 2 d_h` output of word attention for
/// live sentence `r`; every row is run through the shared sentence Bi-GRU as
/// its own sequence. With one row per label each label gets its own
/// sentence sequence; a single row is shared by all sentence contexts.
pub fn sentence_attention(tape: &Tape, sentence_vectors: &[Var], pv: &ParamVars) -> Result<SentenceAttention> {
    let Some(&first) = sentence_vectors.first() else {
        return Err(Error::Mismatch("sentence attention needs at least one sentence".into()));
    };
    let rows = tape.shape(first)[0];
    let contexts = tape.shape(pv.sentence_context)[0];
    if rows != 1 && rows != contexts {
        return Err(Error::Mismatch(format!(
            "{rows} sentence sequences for {contexts} sentence contexts"
        )));
    }
    let n = sentence_vectors.len();
    let inputs = tape.concat_all(sentence_vectors, 0)?;
    let states = bigru(tape, inputs, rows, &vec![true; n * rows], &pv.sentence_gru)?;
    let u = tape.tanh(tape.add_row(tape.matmul(states, pv.sentence_proj)?, pv.sentence_bias)?)?;

    let scores = if rows == contexts {
        let mut per_sentence = Vec::with_capacity(n);
        for r in 0..n {
            let ur = tape.slice_rows(u, r * rows, (r + 1) * rows)?;
            let dots = tape.sum_axis(tape.mul(ur, pv.sentence_context)?, 1)?;
            per_sentence.push(tape.transpose(dots)?);
        }
        tape.concat_all(&per_sentence, 0)?
    } else {
        tape.matmul(u, tape.transpose(pv.sentence_context)?)?
    };
    let alpha = tape.softmax(scores, 0)?;

    let doc = if rows == 1 {
        tape.matmul(tape.transpose(alpha)?, states)?
    } else {
        let mut acc: Option<Var> = None;
        for r in 0..n {
            let s = tape.slice_rows(states, r * rows, (r + 1) * rows)?;
            let weight = tape.transpose(tape.slice_rows(alpha, r, r + 1)?)?;
            let term = tape.mul_col(s, weight)?;
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        acc.expect("at least one sentence")
    };
    Ok(SentenceAttention { doc, alpha })
}

/// Label logits `1 × |Y|`: row-wise `w_l · C_dl + b_l` for label-wise
/// document vectors, `C_d Wᵀ + b` for a single shared one.
pub fn project(tape: &Tape, doc: Var, pv: &ParamVars) -> Result<Var> {
    let labels = tape.shape(pv.projection)[0];
    let scores = match tape.shape(doc)[0] {
        1 => tape.matmul(doc, tape.transpose(pv.projection)?)?,
        r if r == labels => tape.transpose(tape.sum_axis(tape.mul(doc, pv.projection)?, 1)?)?,
        r => return Err(Error::Mismatch(format!("{r} document vectors for {labels} labels"))),
    };
    Ok(tape.add(scores, pv.bias)?)
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `1 × |Y|` pre-sigmoid scores.
    pub logits: Var,
    /// Grid rows of the live sentences, in order.
    pub live_sentences: Vec<usize>,
    pub word: WordAttention,
    /// `None` for a document without live tokens.
    pub sentence: Option<SentenceAttention>,
}

/// Records the full forward pass for `doc`. `dropout` supplies the RNG for
/// training-time dropout on the document representation.
pub fn forward_tape(
    tape: &Tape,
    doc: &EncodedDocument,
    pv: &ParamVars,
    config: &ModelConfig,
    dropout: Option<&mut dyn RngCore>,
) -> Result<ForwardOutput> {
    if doc.sentences != config.sentences || doc.sentence_len != config.sentence_len {
        return Err(Error::Mismatch(format!(
            "document {} encoded as {}×{}, model expects {}×{}",
            doc.id, doc.sentences, doc.sentence_len, config.sentences, config.sentence_len
        )));
    }
    let nt = doc.sentence_len;
    let live: Vec<usize> = (0..doc.sentences)
        .filter(|&s| doc.sentence_mask[s] && (0..nt).any(|t| doc.is_token_live(s, t)))
        .collect();
    let empty_word = WordAttention {
        sentences: Vec::new(),
        positions: Vec::new(),
        alpha: Vec::new(),
        vectors: Vec::new(),
    };
    let (doc_vec, word, sentence) = if live.is_empty() {
        let rows = if config.variant == Variant::Han {
            1
        } else {
            config.num_labels
        };
        (tape.constant(Tensor::zeros(rows, config.doc_dim())), empty_word, None)
    } else {
        let batch = live.len();
        let steps = live
            .iter()
            .map(|&s| (0..nt).rev().find(|&t| doc.is_token_live(s, t)).map_or(0, |t| t + 1))
            .max()
            .unwrap_or(0);
        let mut ids = Vec::with_capacity(steps * batch);
        let mut mask = Vec::with_capacity(steps * batch);
        for t in 0..steps {
            for &s in &live {
                ids.push(doc.token(s, t));
                mask.push(doc.is_token_live(s, t));
            }
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= config.vocab_size) {
            return Err(Error::Mismatch(format!(
                "token id {bad} outside vocabulary of {}",
                config.vocab_size
            )));
        }
        let x = tape.gather_rows(pv.word_embedding, &ids)?;
        let hidden = bigru(tape, x, batch, &mask, &pv.word_gru)?;
        let mut word = word_attention(tape, hidden, batch, &mask, pv)?;
        word.sentences = word.sentences.iter().map(|&b| live[b]).collect();
        let sent = sentence_attention(tape, &word.vectors, pv)?;
        (sent.doc, word, Some(sent))
    };

    let doc_vec = match dropout {
        Some(rng) if config.dropout > 0.0 => {
            let keep = 1.0 - config.dropout;
            let shape = tape.shape(doc_vec);
            let data = (0..shape[0] * shape[1])
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            tape.mul(doc_vec, tape.constant(Tensor::new(shape, data)?))?
        }
        _ => doc_vec,
    };
    let logits = project(tape, doc_vec, pv)?;
    Ok(ForwardOutput {
        logits,
        live_sentences: live,
        word,
        sentence,
    })
}

/// Attention weights of one document on the full `sentences × sentence_len`
/// grid; masked cells hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub sentences: usize,
    pub sentence_len: usize,
    /// One row-major grid per word-attention context.
    pub word: Vec<Vec<f64>>,
    /// One length-`sentences` vector per sentence-attention context.
    pub sentence: Vec<Vec<f64>>,
    pub sentence_mask: Vec<bool>,
    pub token_mask: Vec<bool>,
}

impl AttentionRecord {
    fn context(len: usize, label: usize) -> usize {
        if len == 1 {
            0
        } else {
            label
        }
    }

    /// Word weight for `label`; shared variants return the shared weight.
    pub fn word_weight(&self, label: usize, sentence: usize, position: usize) -> f64 {
        self.word[Self::context(self.word.len(), label)][sentence * self.sentence_len + position]
    }

    pub fn sentence_weight(&self, label: usize, sentence: usize) -> f64 {
        self.sentence[Self::context(self.sentence.len(), label)][sentence]
    }

    /// Whether the word weights are shared across labels.
    pub fn shared_words(&self) -> bool {
        self.word.len() == 1
    }
}

fn record(tape: &Tape, doc: &EncodedDocument, out: &ForwardOutput, config: &ModelConfig) -> AttentionRecord {
    let lw = config.variant.word_contexts(config.num_labels);
    let ls = config.variant.sentence_contexts(config.num_labels);
    let (n, nt) = (doc.sentences, doc.sentence_len);
    let mut word = vec![vec![0.0; n * nt]; lw];
    for ((&s, positions), &alpha) in out.word.sentences.iter().zip(&out.word.positions).zip(&out.word.alpha) {
        let a = tape.value(alpha);
        for (i, &t) in positions.iter().enumerate() {
            for (c, grid) in word.iter_mut().enumerate() {
                grid[s * nt + t] = a.get(i, c);
            }
        }
    }
    let mut sentence = vec![vec![0.0; n]; ls];
    if let Some(sent) = &out.sentence {
        let a = tape.value(sent.alpha);
        for (r, &s) in out.word.sentences.iter().enumerate() {
            for (c, v) in sentence.iter_mut().enumerate() {
                v[s] = a.get(r, c);
            }
        }
    }
    AttentionRecord {
        sentences: n,
        sentence_len: nt,
        word,
        sentence,
        sentence_mask: doc.sentence_mask.clone(),
        token_mask: doc.token_mask.clone(),
    }
}

/// Inference: label probabilities and attention weights for one document.
pub fn forward(
    doc: &EncodedDocument,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(Vec<f64>, AttentionRecord)> {
    let tape = Tape::new();
    let pv = bind(&tape, params, false);
    let out = forward_tape(&tape, doc, &pv, config, None)?;
    let probs = tape.value(out.logits).data().iter().map(|&z| sigmoid(z)).collect();
    Ok((probs, record(&tape, doc, &out, config)))
}

/// Label probabilities only.
pub fn predict_proba(doc: &EncodedDocument, params: &ModelParams, config: &ModelConfig) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let pv = bind(&tape, params, false);
    let out = forward_tape(&tape, doc, &pv, config, None)?;
    Ok(tape.value(out.logits).data().iter().map(|&z| sigmoid(z)).collect())
}
