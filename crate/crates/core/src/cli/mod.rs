//! The `hlan` command line: one subcommand per pipeline stage.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{
    AnalyzeSection, DataSection, EmbedSection, EvalSection, ExplainSection, ModelSection, RunConfig, Split,
};

use crate::autodiff::TensorError;
use crate::error::Error;
use crate::model::Variant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hlan", version, about = "Hierarchical label-wise attention networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbedTarget {
    Words,
    Labels,
}

/// Flags shared by every subcommand; each overrides its config-file value.
#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, value_enum)]
    le_init: Option<Switch>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted label signals.
    GenSynth {
        #[command(flatten)]
        common: Common,
    },
    /// Pre-train word or label embeddings on the training split.
    Embed {
        #[arg(value_enum)]
        target: EmbedTarget,
        /// Comma-separated widths.
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write checkpoints and history.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score a split against its gold labels.
    Evaluate {
        #[arg(long, value_enum)]
        split: Option<Split>,
        #[command(flatten)]
        common: Common,
    },
    /// Write predicted labels and probabilities for a split.
    Predict {
        #[arg(long, value_enum)]
        split: Option<Split>,
        #[command(flatten)]
        common: Common,
    },
    /// Export attention highlights for predicted labels.
    Explain {
        #[arg(long, value_enum)]
        split: Option<Split>,
        /// Show only the first tokens of each sentence in the visual export.
        #[arg(long)]
        compact: bool,
        #[arg(long)]
        max_docs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare label-wise layers with the label embedding tables.
    AnalyzeLe {
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn resolve(&self) -> crate::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        cfg.apply_seed();
        if let Some(v) = self.variant {
            cfg.model.variant = Some(v);
        }
        if let Some(s) = self.le_init {
            cfg.model.le_init = Some(s == Switch::On);
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::config(
                    "threshold",
                    format!("must lie strictly between 0 and 1, got {t}"),
                ));
            }
            cfg.model.threshold = Some(t);
        }
        if let Some(k) = self.k {
            if k == 0 {
                return Err(Error::config("k", "must be positive"));
            }
            cfg.eval.k = Some(k);
            cfg.analyze.k = k;
        }
        Ok(cfg)
    }

    fn out(&self) -> crate::Result<PathBuf> {
        self.out
            .clone()
            .ok_or_else(|| Error::config("out", "an output directory is required (--out)"))
    }

    fn checkpoint(&self) -> crate::Result<PathBuf> {
        self.checkpoint
            .clone()
            .ok_or_else(|| Error::config("checkpoint", "a checkpoint is required (--checkpoint)"))
    }
}

/// Exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_USAGE,
        Error::Divergence { .. } | Error::NonFiniteGradient(_) | Error::Tensor(TensorError::NonFinite(_)) => {
            EXIT_DIVERGED
        }
        _ => EXIT_RUNTIME,
    }
}

fn dispatch(cli: Cli) -> crate::Result<()> {
    match cli.command {
        Command::GenSynth { common } => commands::gen_synth(&common.resolve()?, &common.out()?),
        Command::Embed { target, dims, common } => {
            commands::embed(&common.resolve()?, target == EmbedTarget::Labels, &dims, &common.out()?)
        }
        Command::Train { common } => commands::train(&common.resolve()?, &common.out()?),
        Command::Evaluate { split, common } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = split {
                cfg.eval.split = s;
            }
            commands::evaluate(&cfg, &common.checkpoint()?, &common.out()?)
        }
        Command::Predict { split, common } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = split {
                cfg.eval.split = s;
            }
            commands::predict(&cfg, &common.checkpoint()?, &common.out()?)
        }
        Command::Explain {
            split,
            compact,
            max_docs,
            common,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = split {
                cfg.explain.split = s;
            }
            cfg.explain.compact |= compact;
            if max_docs.is_some() {
                cfg.explain.max_docs = max_docs;
            }
            commands::explain(&cfg, &common.checkpoint()?, &common.out()?)
        }
        Command::AnalyzeLe { common } => {
            commands::analyze_le(&common.resolve()?, &common.checkpoint()?, &common.out()?)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
