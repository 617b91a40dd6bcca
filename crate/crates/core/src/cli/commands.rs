use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{RunConfig, Split};
use crate::corpus::{
    generate_synthetic, read_corpus, write_corpus, write_provenance, EncodedDocument, LabelUniverse, RawDocument,
    Vocabulary,
};
use crate::embeddings::{label_sequences, train_cbow, CbowConfig, EmbeddingTable};
use crate::error::{Error, Result};
use crate::explainer::{explain as explain_doc, to_records, visual_html, write_structured, Highlight, VisualOptions};
use crate::metrics::{default_k, evaluate as evaluate_scores, jaccard_le_analysis, jaccard_null, JaccardReport};
use crate::model::{
    init_params, load_checkpoint, predict_proba, save_checkpoint, AttentionRecord, Checkpoint, ModelConfig, Variant,
};
use crate::pipeline::{encode_all, label_table_dims, train_label_tables, train_word_table, Dataset};
use crate::trainer::{train as train_model, CheckpointSink, Prediction};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Creates `dir` and records the effective configuration in it.
fn prepare_out(dir: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("config.toml"), cfg.to_toml()?)
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::format("json output", e))
}

fn read_split(cfg: &RunConfig, split: Split) -> Result<Vec<RawDocument>> {
    read_corpus(cfg.data.split_path(split)?)
}

fn word_table_path(dir: &Path, dim: usize) -> PathBuf {
    dir.join(format!("words.{dim}.txt"))
}

fn label_table_path(dir: &Path, dim: usize) -> PathBuf {
    dir.join(format!("labels.{dim}.txt"))
}

pub fn gen_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let corpus = generate_synthetic(&cfg.synth)?;
    prepare_out(out, cfg)?;
    write_corpus(out.join("train.jsonl"), &corpus.train)?;
    write_corpus(out.join("valid.jsonl"), &corpus.valid)?;
    write_corpus(out.join("test.jsonl"), &corpus.test)?;
    write_provenance(out.join("provenance.jsonl"), &corpus.provenance)?;
    eprintln!(
        "wrote {} train, {} valid, {} test documents to {}",
        corpus.train.len(),
        corpus.valid.len(),
        corpus.test.len(),
        out.display()
    );
    Ok(())
}

pub fn embed(cfg: &RunConfig, labels: bool, dims: &[usize], out: &Path) -> Result<()> {
    let docs = read_split(cfg, Split::Train)?;
    let model = cfg.model.resolve(1, 1);
    let dims: Vec<usize> = match (dims.is_empty(), labels) {
        (false, _) => dims.to_vec(),
        (true, true) => label_table_dims(&model),
        (true, false) => vec![model.d_e],
    };
    if let Some(bad) = dims.iter().find(|&&d| d == 0) {
        return Err(Error::config("dims", format!("widths must be positive, got {bad}")));
    }
    prepare_out(out, cfg)?;
    let seed = cfg.base_seed();
    for &dim in &dims {
        let (path, table) = if labels {
            let seqs = label_sequences(&docs);
            let cbow = CbowConfig {
                epochs: cfg.embed.label_epochs,
                ..CbowConfig::for_label_sets(dim, &seqs, seed)
            };
            (label_table_path(out, dim), train_cbow(&seqs, &cbow)?.table)
        } else {
            let t = train_word_table(&docs, dim, cfg.data.min_count, cfg.embed.word_epochs, seed)?;
            (word_table_path(out, dim), t)
        };
        table.save(&path)?;
        eprintln!("wrote {} ({} rows)", path.display(), table.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
    best_micro_f1: f64,
    best_precision_at_k: f64,
}

fn load_table(dir: Option<&Path>, path: impl Fn(&Path) -> PathBuf) -> Result<Option<EmbeddingTable>> {
    match dir.map(path) {
        Some(p) if p.exists() => EmbeddingTable::load(&p).map(Some),
        _ => Ok(None),
    }
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let train_raw = read_split(cfg, Split::Train)?;
    let valid_raw = read_split(cfg, Split::Valid)?;
    let test_path = cfg.data.split_path(Split::Test)?;
    let test_raw = if test_path.exists() {
        read_corpus(&test_path)?
    } else {
        Vec::new()
    };

    let probe = cfg.model.resolve(1, 1);
    let data = Dataset::prepare(
        &train_raw,
        &valid_raw,
        &test_raw,
        cfg.data.min_count,
        &probe.encode_config(),
    )?;
    let model = cfg.model.resolve(data.labels.len(), data.vocab.len());
    model.validate()?;
    cfg.train.validate()?;
    prepare_out(out, cfg)?;
    write(&out.join("vocab.tsv"), data.vocab.to_tsv())?;

    let seed = cfg.base_seed();
    let emb_dir = cfg.data.embeddings.as_deref();
    let word = match load_table(emb_dir, |d| word_table_path(d, model.d_e))? {
        Some(t) => Some(t),
        None if cfg.embed.pretrain_words => Some(train_word_table(
            &train_raw,
            model.d_e,
            cfg.data.min_count,
            cfg.embed.word_epochs,
            seed,
        )?),
        None => None,
    };
    // label tables are kept next to the checkpoints for analyze-le
    let mut tables = Vec::new();
    for dim in label_table_dims(&model) {
        let table = match load_table(emb_dir, |d| label_table_path(d, dim))? {
            Some(t) => t,
            None => train_label_tables(&train_raw, &[dim], cfg.embed.label_epochs, seed)?.remove(0),
        };
        table.save(label_table_path(out, dim))?;
        tables.push(table);
    }
    let init = init_params(&model, &data.vocab, &data.labels, word.as_ref(), &tables, seed)?;

    let sink = CheckpointSink {
        dir: out.to_path_buf(),
        labels: data.labels.clone(),
        vocab_fingerprint: data.vocab.fingerprint(),
    };
    let initial = Checkpoint {
        config: model.clone(),
        labels: data.labels.clone(),
        vocab_fingerprint: sink.vocab_fingerprint.clone(),
        params: init.clone(),
    };
    save_checkpoint(out.join("init.ckpt"), &initial)?;
    let outcome = train_model(
        init,
        &model,
        &cfg.train,
        &data.train,
        &data.valid,
        Some(&sink),
        &mut |r| {
            eprintln!(
                "epoch {:>3}  loss {:.4}  valid micro-F1 {:.4}  P@{} {:.4}{}",
                r.epoch,
                r.train_loss,
                r.valid.micro_f1,
                r.valid.k,
                r.valid.precision_at_k,
                if r.improved { "  *" } else { "" }
            )
        },
    )?;
    let best = &outcome.history[outcome.best_epoch - 1];
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.len(),
        stopped_early: outcome.stopped_early,
        best_micro_f1: best.valid.micro_f1,
        best_precision_at_k: best.valid.precision_at_k,
    };
    write(&out.join("summary.json"), json(&summary)?)?;
    eprintln!(
        "best epoch {} written to {}",
        outcome.best_epoch,
        out.join("best.ckpt").display()
    );
    Ok(())
}

/// A checkpoint plus the vocabulary stored beside it, checked against the
/// run configuration.
struct Loaded {
    ckpt: Checkpoint,
    vocab: Vocabulary,
}

impl Loaded {
    fn config(&self) -> &ModelConfig {
        &self.ckpt.config
    }

    fn labels(&self) -> &LabelUniverse {
        &self.ckpt.labels
    }
}

fn load_model(cfg: &RunConfig, path: &Path) -> Result<Loaded> {
    let ckpt = load_checkpoint(path)?;
    let diff = cfg.model.diff(&ckpt.config);
    if !diff.is_empty() {
        return Err(Error::Mismatch(format!(
            "{} disagrees with the configuration: {}",
            path.display(),
            diff.join("; ")
        )));
    }
    let vocab_path = path.parent().unwrap_or(Path::new(".")).join("vocab.tsv");
    let text = std::fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let vocab = Vocabulary::from_tsv(&text)?;
    if vocab.fingerprint() != ckpt.vocab_fingerprint {
        return Err(Error::Mismatch(format!(
            "{} does not match the vocabulary the checkpoint was trained with",
            vocab_path.display()
        )));
    }
    Ok(Loaded { ckpt, vocab })
}

/// Encodes a split with the checkpoint's vocabulary and label universe,
/// refusing corpora that carry labels the model does not know.
fn encode_split(cfg: &RunConfig, loaded: &Loaded, split: Split) -> Result<Vec<EncodedDocument>> {
    let raw = read_split(cfg, split)?;
    let mut unknown: Vec<String> = raw
        .iter()
        .flat_map(|d| d.labels.iter())
        .filter(|l| loaded.labels().index_of(l).is_none())
        .cloned()
        .collect();
    unknown.sort();
    unknown.dedup();
    if !unknown.is_empty() {
        return Err(Error::Mismatch(format!(
            "{} labels in the {} split are not in the checkpoint's {} labels: {}",
            unknown.len(),
            split.name(),
            loaded.labels().len(),
            unknown.join(", ")
        )));
    }
    encode_all(&raw, &loaded.vocab, loaded.labels(), &loaded.config().encode_config())
}

fn threshold(cfg: &RunConfig, loaded: &Loaded) -> f64 {
    cfg.model.threshold.unwrap_or(loaded.config().threshold)
}

pub fn evaluate(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let loaded = load_model(cfg, checkpoint)?;
    let docs = encode_split(cfg, &loaded, cfg.eval.split)?;
    let mut scores = Vec::with_capacity(docs.len());
    for d in &docs {
        scores.push(predict_proba(d, &loaded.ckpt.params, loaded.config())?);
    }
    let truths: Vec<_> = docs.iter().map(|d| d.target.clone()).collect();
    let k = cfg.eval.k.unwrap_or_else(|| default_k(loaded.labels().len()));
    let mut ks = vec![1, k];
    ks.sort_unstable();
    ks.dedup();
    ks.retain(|&x| x <= loaded.labels().len());
    let report = evaluate_scores(&scores, &truths, loaded.labels(), threshold(cfg, &loaded), &ks)?;
    prepare_out(out, cfg)?;
    write(&out.join("metrics.json"), report.to_json()?)?;
    let text = report.to_text();
    write(&out.join("metrics.txt"), &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    id: &'a str,
    labels: Vec<&'a str>,
    /// Probabilities in label-universe order.
    scores: Vec<f64>,
}

pub fn predict(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let loaded = load_model(cfg, checkpoint)?;
    let docs = encode_split(cfg, &loaded, cfg.eval.split)?;
    let th = threshold(cfg, &loaded);
    let mut lines = String::new();
    for d in &docs {
        let p = Prediction::from_probabilities(predict_proba(d, &loaded.ckpt.params, loaded.config())?, th);
        let rec = PredictionRecord {
            id: &d.id,
            labels: p.labels.iter().map(|&l| loaded.labels().name(l)).collect(),
            scores: p.probabilities,
        };
        lines.push_str(&serde_json::to_string(&rec).map_err(|e| Error::format("prediction", e))?);
        lines.push('\n');
    }
    prepare_out(out, cfg)?;
    write(&out.join("labels.txt"), loaded.labels().labels().join("\n") + "\n")?;
    write(&out.join("predictions.jsonl"), lines)?;
    eprintln!("wrote predictions for {} documents", docs.len());
    Ok(())
}

pub fn explain(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let opts = cfg.explain.highlight_options();
    opts.validate()?;
    let loaded = load_model(cfg, checkpoint)?;
    let mut docs = encode_split(cfg, &loaded, cfg.explain.split)?;
    if let Some(n) = cfg.explain.max_docs {
        docs.truncate(n);
    }
    let th = threshold(cfg, &loaded);
    let mut records = Vec::new();
    let mut explained: Vec<(AttentionRecord, Vec<Highlight>)> = Vec::with_capacity(docs.len());
    for d in &docs {
        let (e, rec) = explain_doc(d, &loaded.ckpt.params, loaded.config(), loaded.labels(), th, &opts)?;
        records.extend(to_records(&d.id, &e.highlights));
        explained.push((rec, e.highlights));
    }
    let page_input: Vec<_> = docs
        .iter()
        .zip(&explained)
        .map(|(d, (r, h))| (d, r, h.as_slice()))
        .collect();
    let visual = VisualOptions {
        compact: cfg.explain.compact,
        compact_tokens: cfg.explain.compact_tokens,
    };
    let page = visual_html(&page_input, loaded.labels(), &visual)?;

    prepare_out(out, cfg)?;
    let mut buf = Vec::new();
    write_structured(&mut buf, &records).map_err(|e| Error::io(out.join("explanations.jsonl"), e))?;
    write(&out.join("explanations.jsonl"), buf)?;
    write(&out.join("explanations.html"), page)?;
    eprintln!("explained {} documents ({} records)", docs.len(), records.len());
    Ok(())
}

#[derive(Serialize)]
struct LayerReport {
    layer: &'static str,
    #[serde(flatten)]
    report: JaccardReport,
}

#[derive(Serialize)]
struct AnalysisReport {
    k: usize,
    /// Mean and standard deviation of the Jaccard index between random
    /// neighbor sets of the same size.
    null_mean: f64,
    null_std: f64,
    layers: Vec<LayerReport>,
}

pub fn analyze_le(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let diff = cfg.model.diff(&ckpt.config);
    if !diff.is_empty() {
        return Err(Error::Mismatch(format!(
            "{} disagrees with the configuration: {}",
            checkpoint.display(),
            diff.join("; ")
        )));
    }
    let config = &ckpt.config;
    let k = cfg.analyze.k;
    if k + 1 > ckpt.labels.len() {
        return Err(Error::config(
            "k",
            format!("{k} neighbors need more than {} labels", ckpt.labels.len()),
        ));
    }
    let ckpt_dir = checkpoint.parent().unwrap_or(Path::new("."));
    let find = |dim: usize| -> Result<EmbeddingTable> {
        for dir in [Some(ckpt_dir), cfg.data.embeddings.as_deref()].into_iter().flatten() {
            if let Some(t) = load_table(Some(dir), |d| label_table_path(d, dim))? {
                return t.normalize_unit();
            }
        }
        Err(Error::Io {
            path: label_table_path(ckpt_dir, dim),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "label embedding table not found"),
        })
    };
    let mut layers = vec![("projection", &ckpt.params.projection, config.doc_dim())];
    if config.variant == Variant::Hlan {
        layers.push(("word_context", &ckpt.params.word_context, config.d_w));
    }
    if config.variant != Variant::Han {
        layers.push(("sentence_context", &ckpt.params.sentence_context, config.d_s));
    }
    let mut reports = Vec::new();
    for (name, tensor, dim) in layers {
        let report = jaccard_le_analysis(tensor, &ckpt.labels, &find(dim)?, k)?;
        println!("{name:<17} mean Jaccard {:.4} (std {:.4})", report.mean, report.std);
        reports.push(LayerReport { layer: name, report });
    }
    let (null_mean, null_std) = jaccard_null(ckpt.labels.len() - 1, k, cfg.analyze.null_trials, cfg.base_seed());
    println!("random neighbors  mean Jaccard {null_mean:.4} (std {null_std:.4})");
    prepare_out(out, cfg)?;
    let analysis = AnalysisReport {
        k,
        null_mean,
        null_std,
        layers: reports,
    };
    write(&out.join("analyze_le.json"), json(&analysis)?)
}
