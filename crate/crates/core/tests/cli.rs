use std::fs;
use std::path::Path;
use std::process::Command;

use hlan::cli::{run, EXIT_DIVERGED, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use hlan::corpus::{build_vocab, read_corpus, read_provenance, LabelVector};
use hlan::embeddings::EmbeddingTable;
use hlan::metrics::precision_at_k;

const SMALL: &str = r#"
seed = 3

[synth]
num_labels = 6
num_docs = 240
valid_docs = 40
test_docs = 40
vocab_size = 90
cooccurrence_pairs = 2
doc_sentences = 4
sentence_len = 6

[model]
d_e = 8
d_h = 6
sentences = 4
sentence_len = 6

[train]
learning_rate = 0.01
batch_size = 16
max_epochs = 3

[embed]
word_epochs = 2
label_epochs = 10
"#;

/// Writes the small config with `data.dir` pointing at `<root>/data`.
fn setup(root: &Path, extra: &str) -> String {
    let data = root.join("data");
    let text = format!("{SMALL}\n[data]\ndir = {:?}\n{extra}", data.display().to_string());
    let path = root.join("run.toml");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn hlan(args: &[&str]) -> i32 {
    run(std::iter::once("hlan").chain(args.iter().copied()))
}

fn p(root: &Path, rel: &str) -> String {
    root.join(rel).display().to_string()
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn gen_synth_writes_parseable_deterministic_splits() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = setup(root, "");
    assert_eq!(
        hlan(&["gen-synth", "--config", &cfg, "--out", &p(root, "data")]),
        EXIT_OK
    );
    assert_eq!(
        hlan(&["gen-synth", "--config", &cfg, "--out", &p(root, "again")]),
        EXIT_OK
    );
    for f in [
        "train.jsonl",
        "valid.jsonl",
        "test.jsonl",
        "provenance.jsonl",
        "config.toml",
    ] {
        assert_eq!(read(root.join("data").join(f)), read(root.join("again").join(f)), "{f}");
    }
    assert_eq!(read_corpus(root.join("data/train.jsonl")).unwrap().len(), 160);
    assert_eq!(read_provenance(root.join("data/provenance.jsonl")).unwrap().len(), 240);

    // a different seed from the command line changes the corpus
    assert_eq!(
        hlan(&["gen-synth", "--config", &cfg, "--seed", "4", "--out", &p(root, "other")]),
        EXIT_OK
    );
    assert_ne!(
        read(root.join("data/train.jsonl")),
        read(root.join("other/train.jsonl"))
    );
    assert!(String::from_utf8(read(root.join("other/config.toml")))
        .unwrap()
        .contains("seed = 4"));
}

#[test]
fn invalid_config_exits_with_usage_code_and_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[synth]\ncardinality_mean = -1.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hlan"))
        .args(["gen-synth", "--config", bad.to_str().unwrap(), "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cardinality_mean"));

    assert_eq!(hlan(&["train", "--no-such-flag"]), EXIT_USAGE);
    assert_eq!(hlan(&["gen-synth"]), EXIT_USAGE);
    assert_eq!(
        hlan(&["evaluate", "--threshold", "1.5", "--checkpoint", "x", "--out", "y"]),
        EXIT_USAGE
    );
    fs::write(&bad, "[model]\nwidth = 3\n").unwrap();
    assert_eq!(
        hlan(&["gen-synth", "--config", bad.to_str().unwrap(), "--out", "z"]),
        EXIT_USAGE
    );
}

#[test]
fn embed_writes_one_table_per_width() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = setup(root, "min_count = 3\n");
    assert_eq!(
        hlan(&["gen-synth", "--config", &cfg, "--out", &p(root, "data")]),
        EXIT_OK
    );
    assert_eq!(
        hlan(&[
            "embed",
            "labels",
            "--dims",
            "400,200",
            "--config",
            &cfg,
            "--out",
            &p(root, "e1")
        ]),
        EXIT_OK
    );
    for d in [400, 200] {
        let text = String::from_utf8(read(root.join(format!("e1/labels.{d}.txt")))).unwrap();
        assert_eq!(text.lines().next().unwrap().split('\t').next().unwrap(), d.to_string());
    }
    assert_eq!(
        hlan(&[
            "embed",
            "labels",
            "--dims",
            "400,200",
            "--config",
            &cfg,
            "--out",
            &p(root, "e2")
        ]),
        EXIT_OK
    );
    assert_eq!(
        read(root.join("e1/labels.200.txt")),
        read(root.join("e2/labels.200.txt"))
    );

    assert_eq!(
        hlan(&["embed", "words", "--config", &cfg, "--out", &p(root, "w")]),
        EXIT_OK
    );
    let table = EmbeddingTable::load(root.join("w/words.8.txt")).unwrap();
    let train = read_corpus(root.join("data/train.jsonl")).unwrap();
    let vocab = build_vocab(&train, 3).unwrap();
    let mut expected: Vec<&str> = vocab.corpus_tokens().map(|(_, t)| t).collect();
    let mut got: Vec<&str> = table.items().iter().map(String::as_str).collect();
    expected.sort_unstable();
    got.sort_unstable();
    assert_eq!(got, expected);
}

#[test]
fn embed_rejects_corpus_without_labels() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::create_dir_all(root.join("data")).unwrap();
    fs::write(
        root.join("data/train.jsonl"),
        "{\"id\":\"a\",\"text\":\"x y\",\"labels\":[]}\n",
    )
    .unwrap();
    let cfg = setup(root, "");
    assert_eq!(
        hlan(&["embed", "labels", "--config", &cfg, "--out", &p(root, "e")]),
        EXIT_RUNTIME
    );
}

/// Runs gen-synth, train, evaluate, predict, explain and analyze-le into
/// `<root>/<tag>-*` directories.
fn full_pipeline(root: &Path, cfg: &str, tag: &str) {
    let data = p(root, "data");
    if !root.join("data/train.jsonl").exists() {
        assert_eq!(hlan(&["gen-synth", "--config", cfg, "--out", &data]), EXIT_OK);
    }
    let run_dir = p(root, &format!("{tag}-run"));
    let ckpt = format!("{run_dir}/best.ckpt");
    assert_eq!(hlan(&["train", "--config", cfg, "--out", &run_dir]), EXIT_OK);
    let o = |s: &str| p(root, &format!("{tag}-{s}"));
    assert_eq!(
        hlan(&[
            "evaluate",
            "--config",
            cfg,
            "--checkpoint",
            &ckpt,
            "--k",
            "5",
            "--out",
            &o("eval")
        ]),
        EXIT_OK
    );
    assert_eq!(
        hlan(&["predict", "--config", cfg, "--checkpoint", &ckpt, "--out", &o("pred")]),
        EXIT_OK
    );
    assert_eq!(
        hlan(&[
            "explain",
            "--config",
            cfg,
            "--checkpoint",
            &ckpt,
            "--threshold",
            "0.2",
            "--out",
            &o("expl")
        ]),
        EXIT_OK
    );
    let init = format!("{run_dir}/init.ckpt");
    assert_eq!(
        hlan(&[
            "analyze-le",
            "--config",
            cfg,
            "--checkpoint",
            &init,
            "--k",
            "3",
            "--out",
            &o("le")
        ]),
        EXIT_OK
    );
}

#[test]
fn pipeline_outputs_are_reproducible_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = setup(root, "");
    full_pipeline(root, &cfg, "a");
    full_pipeline(root, &cfg, "b");
    let files = [
        "run/config.toml",
        "run/vocab.tsv",
        "run/history.jsonl",
        "run/init.ckpt",
        "run/best.ckpt",
        "run/last.ckpt",
        "run/summary.json",
        "eval/metrics.json",
        "eval/metrics.txt",
        "pred/predictions.jsonl",
        "expl/explanations.jsonl",
        "expl/explanations.html",
        "le/analyze_le.json",
    ];
    for f in files {
        assert_eq!(
            read(root.join(format!("a-{f}"))),
            read(root.join(format!("b-{f}"))),
            "{f}"
        );
    }
    for d in ["run", "eval", "pred", "expl", "le"] {
        assert!(root.join(format!("a-{d}/config.toml")).exists(), "{d}");
    }

    // P@5 in the report matches the metrics module on the predicted scores
    let metrics: serde_json::Value = serde_json::from_slice(&read(root.join("a-eval/metrics.json"))).unwrap();
    let reported = metrics["precision_at_k"]["P@5"].as_f64().unwrap();
    let labels: Vec<String> = String::from_utf8(read(root.join("a-pred/labels.txt")))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    let test = read_corpus(root.join("data/test.jsonl")).unwrap();
    let preds = String::from_utf8(read(root.join("a-pred/predictions.jsonl"))).unwrap();
    let mut scores = Vec::new();
    let mut truths = Vec::new();
    for (line, doc) in preds.lines().zip(&test) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["id"], doc.id.as_str());
        scores.push(
            v["scores"]
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_f64().unwrap())
                .collect::<Vec<_>>(),
        );
        truths.push(LabelVector::new(
            labels.iter().map(|l| u8::from(doc.labels.contains(l))).collect(),
        ));
    }
    assert_eq!(precision_at_k(&scores, &truths, 5).unwrap(), reported);

    // untouched LE-initialized layers reproduce the label tables' neighborhoods
    let le: serde_json::Value = serde_json::from_slice(&read(root.join("a-le/analyze_le.json"))).unwrap();
    let layers = le["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 3);
    for l in layers {
        assert_eq!(l["mean"].as_f64(), Some(1.0), "{}", l["layer"]);
    }
}

#[test]
fn mismatched_checkpoint_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = setup(root, "");
    assert_eq!(
        hlan(&["gen-synth", "--config", &cfg, "--out", &p(root, "data")]),
        EXIT_OK
    );
    let small = setup(root, "").replace("run.toml", "short.toml");
    fs::write(
        &small,
        fs::read_to_string(&cfg)
            .unwrap()
            .replace("max_epochs = 3", "max_epochs = 1"),
    )
    .unwrap();
    assert_eq!(hlan(&["train", "--config", &small, "--out", &p(root, "run")]), EXIT_OK);
    let ckpt = p(root, "run/best.ckpt");

    let out = Command::new(env!("CARGO_BIN_EXE_hlan"))
        .args([
            "evaluate",
            "--config",
            &small,
            "--checkpoint",
            &ckpt,
            "--variant",
            "han",
            "--out",
        ])
        .arg(root.join("ev"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_RUNTIME));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("variant: config han, checkpoint hlan"), "{msg}");

    let wide = root.join("wide.toml");
    fs::write(&wide, fs::read_to_string(&small).unwrap().replace("d_h = 6", "d_h = 7")).unwrap();
    assert_eq!(
        hlan(&[
            "predict",
            "--config",
            wide.to_str().unwrap(),
            "--checkpoint",
            &ckpt,
            "--out",
            &p(root, "pr")
        ]),
        EXIT_RUNTIME
    );

    // a vocabulary that is not the one the checkpoint was trained with
    let vocab = root.join("run/vocab.tsv");
    let text = fs::read_to_string(&vocab).unwrap();
    let tampered: String = text.lines().map(|l| l.replacen("w1\t", "w1x\t", 1) + "\n").collect();
    assert_ne!(tampered, text);
    fs::write(&vocab, tampered).unwrap();
    assert_eq!(
        hlan(&[
            "predict",
            "--config",
            &small,
            "--checkpoint",
            &ckpt,
            "--out",
            &p(root, "pr")
        ]),
        EXIT_RUNTIME
    );
    fs::write(&vocab, text).unwrap();

    // gold labels the model has never seen
    let test = root.join("data/test.jsonl");
    let mut lines = fs::read_to_string(&test).unwrap();
    lines.push_str("{\"id\":\"extra\",\"text\":\"w1 w2\",\"labels\":[\"Z999\"]}\n");
    fs::write(&test, lines).unwrap();
    assert_eq!(
        hlan(&[
            "evaluate",
            "--config",
            &small,
            "--checkpoint",
            &ckpt,
            "--out",
            &p(root, "ev")
        ]),
        EXIT_RUNTIME
    );
}

#[test]
fn divergence_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = setup(root, "");
    assert_eq!(
        hlan(&["gen-synth", "--config", &cfg, "--out", &p(root, "data")]),
        EXIT_OK
    );
    let wild = root.join("wild.toml");
    fs::write(
        &wild,
        fs::read_to_string(&cfg)
            .unwrap()
            .replace("learning_rate = 0.01", "learning_rate = 1e200"),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hlan"))
        .args(["train", "--config", wild.to_str().unwrap(), "--out"])
        .arg(root.join("run"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(EXIT_DIVERGED),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
