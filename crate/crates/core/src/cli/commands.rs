use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use super::{EvalArgs, GenArgs, RunArgs, DEFAULT_OUTPUT_DIR};
use crate::corpus::{load_corpus, save_stopwords, SyntheticConfig, SyntheticWorld};
use crate::embedding::load_embeddings;
use crate::error::{DivaError, Result};
use crate::fingerprint::{fingerprint, hex_digest};
use crate::metrics::{evaluate, TestSet};
use crate::pipeline::{run, FinalModel, IterationRecord, ModelSelection, PipelineConfig, PseudoSource, SongPrediction, StoppingRule};
use crate::scoring::{Factor, SnAggregation};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const DEFAULT_DIM: usize = 32;

fn out_dir(given: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = given.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    fs::create_dir_all(&dir).map_err(|e| DivaError::io(&dir, e))?;
    Ok(dir)
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| DivaError::validation(format!("missing required --{flag}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value).map_err(|e| DivaError::Internal(e.to_string()))?;
    fs::write(path, body + "\n").map_err(|e| DivaError::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let io = |e| DivaError::io(path, e);
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for row in rows {
        serde_json::to_writer(&mut w, &row).map_err(|e| DivaError::Internal(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Generates a synthetic world into the output directory.
pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let d = SyntheticConfig::default();
    let config = SyntheticConfig {
        n_songs: args.n_songs.unwrap_or(d.n_songs),
        vocab_size: args.vocab_size.unwrap_or(d.vocab_size),
        noise_vocab_size: args.noise_vocab_size.unwrap_or(d.noise_vocab_size),
        labels_per_song_gold: args.gold.unwrap_or(d.labels_per_song_gold),
        labels_per_song_complete: args.complete.unwrap_or(d.labels_per_song_complete),
        comments_per_song: args.comments_per_song.unwrap_or(d.comments_per_song),
        words_per_comment: args.words_per_comment.unwrap_or(d.words_per_comment),
        noise_token_ratio: args.noise_ratio.unwrap_or(d.noise_token_ratio),
        distractor_ratio: args.distractor_ratio.unwrap_or(d.distractor_ratio),
        n_topics: args.topics.unwrap_or(d.n_topics),
        seed: args.seed.unwrap_or(d.seed),
    };
    let dim = args.dim.unwrap_or(DEFAULT_DIM);
    let world = SyntheticWorld::generate(&config)?;
    let embeddings = world.embeddings::<f64>(dim, config.seed)?;
    let dir = out_dir(&args.out_dir)?;
    world.corpus.save(&dir.join(CORPUS_FILE))?;
    save_stopwords(world.corpus.stopwords(), &dir.join(STOPWORDS_FILE))?;
    embeddings.save(&dir.join(EMBEDDINGS_FILE))?;
    info!("wrote {} songs and {} vectors to {}", world.corpus.n_songs(), embeddings.len(), dir.display());
    println!(
        "{}",
        serde_json::json!({ "songs": world.corpus.n_songs(), "vectors": embeddings.len(), "dim": dim, "out_dir": dir })
    );
    Ok(())
}

/// Resolves the pipeline configuration from merged flags.
pub fn pipeline_config(args: &RunArgs) -> Result<PipelineConfig> {
    let mut c = PipelineConfig::default();
    if let Some(v) = &args.variant {
        c.variant = v.parse()?;
    }
    if let Some(v) = args.max_iter {
        c.max_iterations = v;
    }
    if let Some(v) = args.patience {
        c.patience = v;
    }
    if let Some(v) = args.min_new_labels {
        c.stopping = StoppingRule::NewLabelThreshold(v);
    }
    if let Some(v) = &args.selection {
        c.selection = v.parse::<ModelSelection>()?;
    }
    if let Some(v) = args.psp_k {
        c.psp_k = v;
    }
    if let Some(v) = args.tau {
        c.score.tau = v;
    }
    if let Some(v) = args.theta_c {
        c.train.pseudo_confidence_threshold = v;
    }
    if let Some(v) = args.top_n {
        c.score.top_n = v;
    }
    if let Some(v) = args.joint_threshold {
        c.score.global_threshold = Some(v);
    }
    if let Some(v) = args.m {
        c.score.m = v;
    }
    if let Some(v) = args.k {
        c.score.k = Some(v);
    }
    if let Some(v) = args.kmeans_iters {
        c.score.kmeans_iters = v;
    }
    for name in &args.ablate {
        match name.parse::<Factor>()? {
            Factor::Si => c.score.enable_si = false,
            Factor::Sn => c.score.enable_sn = false,
            Factor::Pv => c.score.enable_pv = false,
            Factor::Da => c.score.enable_da = false,
        }
    }
    if let Some(v) = &args.sn_aggregation {
        c.score.sn_aggregation = v.parse::<SnAggregation>()?;
    }
    if let Some(v) = args.epochs {
        c.train.epochs = v;
    }
    if let Some(v) = args.lr {
        c.train.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        c.train.batch_size = v;
    }
    if let Some(v) = args.negatives {
        c.train.negatives_per_positive = v;
    }
    if let Some(v) = args.subsample {
        c.train.subsample_threshold = v;
    }
    if let Some(v) = args.hidden_units {
        c.train.hidden_units = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Serialize)]
struct InputFile {
    role: &'static str,
    name: String,
    sha256: String,
}

fn describe_input(role: &'static str, path: &Path) -> Result<InputFile> {
    let bytes = fs::read(path).map_err(|e| DivaError::io(path, e))?;
    Ok(InputFile {
        role,
        name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        sha256: hex_digest(&bytes),
    })
}

#[derive(Debug, Serialize)]
struct PseudoLabelCounts {
    total: usize,
    classifier: usize,
    joint: usize,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    variant: &'static str,
    seed: u64,
    config: &'a PipelineConfig,
    config_sha256: String,
    inputs: Vec<InputFile>,
    n_songs: usize,
    skipped_songs: &'a [String],
    records: &'a [IterationRecord],
    selected_iteration: usize,
    pseudo_labels: PseudoLabelCounts,
    artifacts: Vec<String>,
}

/// Removes iteration artifacts left by an earlier run in the same directory.
fn clear_iteration_artifacts(dir: &Path) -> Result<()> {
    let checkpoints = dir.join("checkpoints");
    if checkpoints.is_dir() {
        fs::remove_dir_all(&checkpoints).map_err(|e| DivaError::io(&checkpoints, e))?;
    }
    for entry in fs::read_dir(dir).map_err(|e| DivaError::io(dir, e))? {
        let path = entry.map_err(|e| DivaError::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if (name.starts_with("scores_iter_") && name.ends_with(".jsonl")) || name == "model.json" {
            fs::remove_file(&path).map_err(|e| DivaError::io(&path, e))?;
        }
    }
    Ok(())
}

/// Runs one pipeline variant and writes its artifacts.
pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = pipeline_config(args)?;
    let corpus_path = required(&args.corpus, "corpus")?;
    let emb_path = required(&args.embeddings, "embeddings")?;
    let corpus = load_corpus(corpus_path, args.stopwords.as_deref())?;
    let embeddings = load_embeddings::<f64>(emb_path)?;
    let mut inputs = vec![describe_input("corpus", corpus_path)?, describe_input("embeddings", emb_path)?];
    if let Some(p) = &args.stopwords {
        inputs.push(describe_input("stopwords", p)?);
    }

    let out = run(&corpus, &embeddings, &config)?;

    let dir = out_dir(&args.out_dir)?;
    clear_iteration_artifacts(&dir)?;
    let mut artifacts = vec!["predictions.jsonl".to_string(), "pseudo_labels.json".to_string()];
    write_jsonl(&dir.join("predictions.jsonl"), &out.predictions)?;
    write_json(&dir.join("pseudo_labels.json"), &out.store)?;
    match &out.model {
        FinalModel::Binary(m) => {
            m.save(&config.train, &dir.join("model.json"))?;
            artifacts.push("model.json".into());
        }
        FinalModel::Mlc(m) => {
            write_json(&dir.join("model.json"), m)?;
            artifacts.push("model.json".into());
        }
        FinalModel::None => {}
    }
    if !out.iteration_models.is_empty() {
        let ck = dir.join("checkpoints");
        fs::create_dir_all(&ck).map_err(|e| DivaError::io(&ck, e))?;
        for (i, m) in out.iteration_models.iter().enumerate() {
            m.save(&config.train, &ck.join(format!("iter_{i}.json")))?;
            artifacts.push(format!("checkpoints/iter_{i}.json"));
        }
    }
    if config.variant.uses_joint() {
        for (i, dump) in out.score_dumps.iter().enumerate() {
            let name = format!("scores_iter_{i}.jsonl");
            write_jsonl(&dir.join(&name), dump)?;
            artifacts.push(name);
        }
    }
    artifacts.push("manifest.json".into());

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        variant: config.variant.as_str(),
        seed: config.seed,
        config: &config,
        config_sha256: fingerprint(&config),
        inputs,
        n_songs: corpus.n_songs(),
        skipped_songs: &out.skipped_songs,
        records: &out.records,
        selected_iteration: out.selected_iteration,
        pseudo_labels: PseudoLabelCounts {
            total: out.store.len(),
            classifier: out.store.count_by_source(PseudoSource::Classifier),
            joint: out.store.count_by_source(PseudoSource::Joint),
        },
        artifacts,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!(
        "{}",
        serde_json::json!({
            "variant": config.variant.as_str(),
            "iterations": out.records.len(),
            "selected_iteration": out.selected_iteration,
            "pseudo_labels": out.store.len(),
            "out_dir": dir,
        })
    );
    Ok(())
}

/// Reads `predictions.jsonl`: song id → labels in file order.
pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let f = fs::File::open(path).map_err(|e| DivaError::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| DivaError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: SongPrediction = serde_json::from_str(&line).map_err(|e| DivaError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.insert(p.id.clone(), p.ranked_labels()).is_some() {
            return Err(DivaError::validation(format!("{}:{}: duplicate song id `{}`", path.display(), i + 1, p.id)));
        }
    }
    Ok(out)
}

/// Evaluates a predictions file and writes `metrics.json` and `per_song.jsonl`.
pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let test_set: TestSet = args.test_set.as_deref().unwrap_or("gold").parse()?;
    let corpus = load_corpus(required(&args.corpus, "corpus")?, args.stopwords.as_deref())?;
    let predictions = read_predictions(required(&args.predictions, "predictions")?)?;
    let embeddings = match &args.embeddings {
        Some(p) => Some(load_embeddings::<f64>(p)?),
        None => None,
    };
    let report = evaluate(&predictions, &corpus, test_set, embeddings.as_ref())?;
    let dir = out_dir(&args.out_dir)?;
    write_json(&dir.join("metrics.json"), &report)?;
    write_jsonl(&dir.join("per_song.jsonl"), &report.per_song)?;
    println!("{}", serde_json::to_string(&report).map_err(|e| DivaError::Internal(e.to_string()))?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Variant;

    #[test]
    fn flags_map_onto_pipeline_config() {
        let args = RunArgs {
            variant: Some("diva-light".into()),
            theta_c: Some(0.7),
            ablate: vec!["sn".into(), "da".into()],
            k: Some(4),
            min_new_labels: Some(3),
            ..RunArgs::default()
        };
        let c = pipeline_config(&args).unwrap();
        assert_eq!(c.variant, Variant::DivaLight);
        assert_eq!(c.train.pseudo_confidence_threshold, 0.7);
        assert!(c.score.enable_si && !c.score.enable_sn && c.score.enable_pv && !c.score.enable_da);
        assert_eq!(c.score.k, Some(4));
        assert_eq!(c.stopping, StoppingRule::NewLabelThreshold(3));
    }

    #[test]
    fn bad_values_are_validation_errors() {
        for args in [
            RunArgs { variant: Some("bogus".into()), ..RunArgs::default() },
            RunArgs { ablate: vec!["xx".into()], ..RunArgs::default() },
            RunArgs { max_iter: Some(0), ..RunArgs::default() },
        ] {
            assert_eq!(pipeline_config(&args).unwrap_err().exit_code(), 1);
        }
    }
}
