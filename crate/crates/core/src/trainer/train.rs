use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, add_l2_gradient, clip_global_norm, l2_penalty, AdamState, StopMetric, TrainConfig};
use crate::autodiff::{Tape, Tensor, TensorError};
use crate::corpus::{EncodedDocument, LabelUniverse};
use crate::error::{Error, Result};
use crate::metrics::{confusion, micro_macro, precision_at_k, threshold_predictions};
use crate::model::{bind, forward_tape, predict_proba, save_checkpoint, Checkpoint, ModelConfig, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub precision_at_k: f64,
    pub k: usize,
}

/// One line of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy per training document, penalty excluded.
    pub train_loss: f64,
    pub l2_penalty: f64,
    #[serde(flatten)]
    pub valid: ValidationMetrics,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelParams,
    /// 1-based epoch of `best`.
    pub best_epoch: usize,
    pub last: ModelParams,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Where [`train`] writes `history.jsonl`, `best.ckpt` and `last.ckpt`.
#[derive(Debug, Clone)]
pub struct CheckpointSink {
    pub dir: PathBuf,
    pub labels: LabelUniverse,
    pub vocab_fingerprint: String,
}

impl CheckpointSink {
    fn save(&self, name: &str, config: &ModelConfig, params: &ModelParams) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let ckpt = Checkpoint {
            config: config.clone(),
            labels: self.labels.clone(),
            vocab_fingerprint: self.vocab_fingerprint.clone(),
            params: params.clone(),
        };
        save_checkpoint(&path, &ckpt)?;
        Ok(path)
    }
}

/// Independent stream per (seed, epoch, purpose).
fn epoch_rng(seed: u64, epoch: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 8) | purpose);
    rng
}

pub fn validation_metrics(
    docs: &[EncodedDocument],
    params: &ModelParams,
    config: &ModelConfig,
    k: usize,
) -> Result<ValidationMetrics> {
    let mut scores = Vec::with_capacity(docs.len());
    for d in docs {
        scores.push(predict_proba(d, params, config)?);
    }
    let truths: Vec<_> = docs.iter().map(|d| d.target.clone()).collect();
    let preds: Vec<_> = scores
        .iter()
        .map(|s| threshold_predictions(s, config.threshold))
        .collect();
    let (micro, macro_) = micro_macro(&confusion(&preds, &truths)?);
    let k = k.min(config.num_labels);
    Ok(ValidationMetrics {
        micro_f1: micro.f1,
        macro_f1: macro_.f1,
        precision_at_k: precision_at_k(&scores, &truths, k)?,
        k,
    })
}

/// Summed loss and its gradients (entries order) for one minibatch.
fn batch_gradients(
    docs: &[&EncodedDocument],
    params: &ModelParams,
    config: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let tape = Tape::new();
    let pv = bind(&tape, params, true);
    let mut terms = Vec::with_capacity(docs.len());
    for doc in docs {
        let out = forward_tape(&tape, doc, &pv, config, Some(rng))?;
        terms.push(tape.bce_with_logits(out.logits, &Tensor::row(doc.target.to_f64()))?);
    }
    let loss = tape.sum(tape.concat_all(&terms, 1)?)?;
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let grads = tape.backward(loss)?;
    let flat = pv
        .list()
        .into_iter()
        .zip(params.entries())
        .map(|(v, (_, _, t))| grads.raw(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    Ok((value, flat))
}

/// Minibatch Adam on summed cross-entropy plus L2, with early stopping on
/// the validation metric.
///
/// Each epoch visits the training documents in a permutation drawn from
/// `(seed, epoch)`; dropout draws from a separate stream of the same pair.
/// Training stops after `patience` epochs without a strict improvement, and
/// `best` holds the parameters of the first epoch with the highest metric.
/// `on_epoch` sees every history record as it is produced.
pub fn train(
    init: ModelParams,
    config: &ModelConfig,
    tc: &TrainConfig,
    train_docs: &[EncodedDocument],
    valid_docs: &[EncodedDocument],
    sink: Option<&CheckpointSink>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    tc.validate()?;
    init.check_shapes(config)?;
    if train_docs.is_empty() || valid_docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut history_file = match sink {
        Some(s) => {
            std::fs::create_dir_all(&s.dir).map_err(|e| Error::io(&s.dir, e))?;
            let path = s.dir.join("history.jsonl");
            Some(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))
        }
        None => None,
    };

    let names: Vec<String> = init.entries().into_iter().map(|(n, _, _)| n).collect();
    let mut state = AdamState::new(&init.entries().iter().map(|(_, _, t)| *t).collect::<Vec<_>>());
    let adam = tc.adam();
    let mut params = init;
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_metric = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut history = Vec::new();
    let mut last_good: Option<PathBuf> = None;
    let mut stopped_early = false;

    for epoch in 1..=tc.max_epochs {
        let mut order: Vec<usize> = (0..train_docs.len()).collect();
        order.shuffle(&mut epoch_rng(tc.seed, epoch, 0));
        let mut dropout_rng = epoch_rng(tc.seed, epoch, 1);
        let mut total = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let docs: Vec<&EncodedDocument> = batch.iter().map(|&i| &train_docs[i]).collect();
            let (loss, mut grads) = match batch_gradients(&docs, &params, config, &mut dropout_rng) {
                Ok((loss, _)) if !loss.is_finite() => return Err(Error::Divergence { epoch, loss, last_good }),
                Err(Error::Tensor(TensorError::NonFinite(_))) => {
                    return Err(Error::Divergence {
                        epoch,
                        loss: f64::NAN,
                        last_good,
                    })
                }
                other => other?,
            };
            total += loss;
            add_l2_gradient(&params, tc.l2_lambda, &mut grads);
            if tc.clip_norm > 0.0 {
                clip_global_norm(&mut grads, tc.clip_norm);
            }
            let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            adam_step(&mut params.tensors_mut(), &refs, &names, &mut state, &adam)?;
        }

        let valid = validation_metrics(valid_docs, &params, config, tc.k)?;
        let metric = match tc.early_stop_metric {
            StopMetric::MicroF1 => valid.micro_f1,
            StopMetric::PrecisionAtK => valid.precision_at_k,
        };
        let improved = metric > best_metric;
        let record = EpochRecord {
            epoch,
            train_loss: total / train_docs.len() as f64,
            l2_penalty: l2_penalty(&params, tc.l2_lambda),
            valid,
            improved,
        };
        if let (Some(w), Some(s)) = (history_file.as_mut(), sink) {
            let line = serde_json::to_string(&record).map_err(|e| Error::format("history", e))?;
            let path = s.dir.join("history.jsonl");
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(&path, e))?;
        }
        on_epoch(&record);
        history.push(record);

        if improved {
            best_metric = metric;
            best_epoch = epoch;
            best = params.clone();
            stale = 0;
            if let Some(s) = sink {
                s.save("best.ckpt", config, &best)?;
            }
        } else {
            stale += 1;
        }
        if let Some(s) = sink {
            last_good = Some(s.save("last.ckpt", config, &params)?);
        }
        if stale >= tc.patience {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainOutcome {
        best,
        best_epoch,
        last: params,
        history,
        stopped_early,
    })
}
