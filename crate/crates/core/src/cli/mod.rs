//! Command-line front end: `gen`, `run` and `eval`.
//!
//! Every command accepts `--config <file.toml>`, a flat table whose keys are
//! the long flag names with `-` replaced by `_`. Precedence, highest first:
//! command-line flag, `DIVA_OUTPUT_DIR` (output directory only), config file,
//! built-in default.

mod commands;
mod settings;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{DivaError, Result};

pub use commands::{cmd_eval, cmd_gen, cmd_run};
pub use settings::merge_with_file;

pub const OUTPUT_DIR_ENV: &str = "DIVA_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "diva-out";

#[derive(Debug, Parser)]
#[command(name = "diva", version, about = "Harvest open-vocabulary labels for songs from listener comments")]
pub struct Cli {
    /// Worker threads for inference and scoring.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus, its stopword list and a matching embedding table.
    Gen(GenArgs),
    /// Run a pipeline variant and write predictions, checkpoints and a manifest.
    Run(RunArgs),
    /// Score a predictions file against gold or complete label sets.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenArgs {
    /// Flat TOML file with default values for the flags below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub n_songs: Option<usize>,
    /// Number of label words across all topics.
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub noise_vocab_size: Option<usize>,
    /// Gold labels per song.
    #[arg(long)]
    pub gold: Option<usize>,
    /// Complete labels per song.
    #[arg(long)]
    pub complete: Option<usize>,
    #[arg(long)]
    pub comments_per_song: Option<usize>,
    #[arg(long)]
    pub words_per_comment: Option<usize>,
    #[arg(long)]
    pub noise_ratio: Option<f64>,
    #[arg(long)]
    pub distractor_ratio: Option<f64>,
    #[arg(long)]
    pub topics: Option<usize>,
    /// Embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Corpus in JSON Lines form.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Stopword list, one token per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Embedding table in word2vec text form.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    /// diva, diva-static, diva-light, nst, tfidf or mlc.
    #[arg(long)]
    pub variant: Option<String>,
    /// Upper bound on iteration records, iteration 0 included.
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Stop once an iteration adds fewer pseudo-labels than this, instead of the PSP rule.
    #[arg(long)]
    pub min_new_labels: Option<usize>,
    /// best-psp or last.
    #[arg(long)]
    pub selection: Option<String>,
    #[arg(long)]
    pub psp_k: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Classifier confidence threshold for pseudo-labels and predictions.
    #[arg(long)]
    pub theta_c: Option<f64>,
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Select every candidate whose joint score reaches this value instead of the top n.
    #[arg(long)]
    pub joint_threshold: Option<f64>,
    /// Number of clusterings.
    #[arg(long)]
    pub m: Option<usize>,
    /// Clusters per clustering.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub kmeans_iters: Option<usize>,
    /// Disable one joint-score factor (si, sn, pv, da); repeatable.
    #[arg(long, value_name = "FACTOR")]
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ablate: Vec<String>,
    /// min or max.
    #[arg(long)]
    pub sn_aggregation: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Subsampling threshold t for pseudo-positive pairs.
    #[arg(long)]
    pub subsample: Option<f64>,
    /// Hidden tanh units; 0 selects the affine classifier.
    #[arg(long)]
    pub hidden_units: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// predictions.jsonl written by `run`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Enables the soft-matching metrics.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// gold or complete.
    #[arg(long)]
    pub test_set: Option<String>,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
}

/// Structured error line written to stderr.
#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    kind: &'a str,
    message: String,
    exit_code: i32,
}

fn report(kind: &str, message: String, exit_code: i32) -> i32 {
    let line = serde_json::json!({ "error": ErrorReport { kind, message, exit_code } });
    eprintln!("{line}");
    exit_code
}

pub fn execute(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(DivaError::validation("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| DivaError::Internal(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Gen(a) => cmd_gen(&merge_with_file(&a, a.config.as_deref())?),
        Command::Run(a) => cmd_run(&merge_with_file(&a, a.config.as_deref())?),
        Command::Eval(a) => cmd_eval(&merge_with_file(&a, a.config.as_deref())?),
    }
}

/// Parses `std::env::args`, runs the command and returns the process exit code.
pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            return report("usage", e.to_string().trim_end().to_string(), 1);
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => report(e.kind(), e.to_string(), e.exit_code()),
    }
}
