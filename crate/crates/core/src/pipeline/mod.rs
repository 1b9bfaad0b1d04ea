//! Iterative pseudo-label harvesting and its baselines.

pub mod mlc;
pub mod store;

use std::collections::BTreeMap;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{score_candidates, train, BinaryClassifier, DocVectors, TrainConfig};
use crate::corpus::{Corpus, LabelSet, Song};
use crate::embedding::EmbeddingTable;
use crate::error::{DivaError, Result};
use crate::metrics::{psndcg, psp, PropensityModel, DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B};
use crate::num::Real;
use crate::rng::stream;
use crate::scoring::{select_joint_pseudo_labels, tf_idf, JointScoreBreakdown, JointScorer, ScoreConfig};

pub use mlc::MlcModel;
pub use store::{PseudoEntry, PseudoLabelStore, PseudoSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Diva,
    DivaStatic,
    DivaLight,
    Nst,
    Tfidf,
    Mlc,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Diva => "diva",
            Variant::DivaStatic => "diva_static",
            Variant::DivaLight => "diva_light",
            Variant::Nst => "nst",
            Variant::Tfidf => "tfidf",
            Variant::Mlc => "mlc",
        }
    }

    pub fn uses_joint(self) -> bool {
        matches!(self, Variant::Diva | Variant::DivaStatic | Variant::DivaLight)
    }
}

impl FromStr for Variant {
    type Err = DivaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "diva" => Ok(Variant::Diva),
            "diva_static" => Ok(Variant::DivaStatic),
            "diva_light" => Ok(Variant::DivaLight),
            "nst" => Ok(Variant::Nst),
            "tfidf" => Ok(Variant::Tfidf),
            "mlc" => Ok(Variant::Mlc),
            other => Err(DivaError::validation(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "min_new")]
pub enum StoppingRule {
    /// Stop when training-set PSP stalls for `patience` iterations.
    Psp,
    /// Stop when an iteration adds fewer than this many new pseudo-labels.
    NewLabelThreshold(usize),
}

/// Which iteration's model produces the final predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    /// Highest training-set PSP (earliest on ties).
    BestPsp,
    Last,
}

impl FromStr for ModelSelection {
    type Err = DivaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "best_psp" => Ok(ModelSelection::BestPsp),
            "last" => Ok(ModelSelection::Last),
            other => Err(DivaError::validation(format!("unknown model selection `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub variant: Variant,
    /// Upper bound on iteration records, iteration 0 included.
    pub max_iterations: usize,
    pub patience: usize,
    pub stopping: StoppingRule,
    pub selection: ModelSelection,
    /// Cutoff of the training-set PSP ranking.
    pub psp_k: usize,
    pub train: TrainConfig,
    pub score: ScoreConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variant: Variant::Diva,
            max_iterations: 10,
            patience: 1,
            stopping: StoppingRule::Psp,
            selection: ModelSelection::BestPsp,
            psp_k: 5,
            train: TrainConfig::default(),
            score: ScoreConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(DivaError::validation("max_iterations must be at least 1"));
        }
        if self.patience == 0 {
            return Err(DivaError::validation("patience must be at least 1"));
        }
        if self.psp_k == 0 {
            return Err(DivaError::validation("psp_k must be at least 1"));
        }
        self.train.validate()?;
        self.score.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub new_classifier: usize,
    pub new_joint: usize,
    pub store_size: usize,
    pub train_psp: f64,
    pub train_psndcg: f64,
    pub loss_first: Option<f64>,
    pub loss_last: Option<f64>,
    pub pseudo_pairs_kept: usize,
}

impl IterationRecord {
    pub fn new_labels(&self) -> usize {
        self.new_classifier + self.new_joint
    }
}

/// `true` once PSP has not improved for `patience` records, or (under the
/// threshold rule, or whenever an augmentation round added nothing) once
/// too few new pseudo-labels arrived.
pub fn stopping_check(history: &[IterationRecord], patience: usize, rule: StoppingRule) -> bool {
    let Some(last) = history.last() else {
        return false;
    };
    if last.iteration > 0 {
        let min_new = match rule {
            StoppingRule::Psp => 1,
            StoppingRule::NewLabelThreshold(n) => n.max(1),
        };
        if last.new_labels() < min_new {
            return true;
        }
    }
    if rule != StoppingRule::Psp {
        return false;
    }
    history.len() - 1 - best_psp_index(history) >= patience
}

/// Index of the record with the highest training PSP, earliest on ties.
pub fn best_psp_index(history: &[IterationRecord]) -> usize {
    let mut best = 0;
    for (i, r) in history.iter().enumerate() {
        if r.train_psp > history[best].train_psp {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    Gold,
    Classifier,
    Tfidf,
    Mlc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedLabel {
    pub label: String,
    pub score: f64,
    pub source: PredictionSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongPrediction {
    pub id: String,
    pub labels: Vec<PredictedLabel>,
}

impl SongPrediction {
    fn ranked(id: &str, mut labels: Vec<PredictedLabel>) -> Self {
        labels.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite scores").then_with(|| a.label.cmp(&b.label)));
        SongPrediction { id: id.to_string(), labels }
    }

    pub fn label_set(&self) -> LabelSet {
        self.labels.iter().map(|l| l.label.clone()).collect()
    }

    pub fn ranked_labels(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.label.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinalModel<F> {
    Binary(BinaryClassifier<F>),
    Mlc(MlcModel<F>),
    None,
}

#[derive(Debug, Clone)]
pub struct RunOutput<F> {
    pub model: FinalModel<F>,
    /// Record whose model produced the predictions.
    pub selected_iteration: usize,
    /// Sorted by song id.
    pub predictions: Vec<SongPrediction>,
    pub records: Vec<IterationRecord>,
    pub store: PseudoLabelStore,
    /// Store state after each record.
    pub store_history: Vec<PseudoLabelStore>,
    /// Model after each record (binary-classifier variants only).
    pub iteration_models: Vec<BinaryClassifier<F>>,
    /// Selected joint-score breakdowns per record.
    pub score_dumps: Vec<Vec<JointScoreBreakdown<F>>>,
    pub skipped_songs: Vec<String>,
}

impl<F> RunOutput<F> {
    pub fn prediction_map(&self) -> BTreeMap<String, Vec<String>> {
        self.predictions.iter().map(|p| (p.id.clone(), p.ranked_labels())).collect()
    }
}

/// Runs the configured variant end to end.
pub fn run<F: Real>(corpus: &Corpus, embeddings: &EmbeddingTable<F>, config: &PipelineConfig) -> Result<RunOutput<F>> {
    config.validate()?;
    if corpus.n_songs() == 0 {
        return Err(DivaError::validation("corpus has no songs"));
    }
    let docs = DocVectors::compute(corpus, embeddings);
    if docs.embedded_count() == 0 {
        return Err(DivaError::validation("no song has an in-vocabulary token; embeddings do not match corpus"));
    }
    let skipped: Vec<String> = corpus
        .songs()
        .iter()
        .enumerate()
        .filter(|(i, _)| docs.get(*i).is_none())
        .map(|(_, s)| s.id().to_string())
        .collect();
    for id in &skipped {
        warn!("song `{id}` has no in-vocabulary tokens; skipped");
    }
    let mut out = match config.variant {
        Variant::Tfidf => run_tfidf(corpus, config),
        Variant::Mlc => run_mlc(corpus, embeddings, &docs, config),
        _ => run_iterative(corpus, embeddings, &docs, config),
    }?;
    out.skipped_songs = skipped;
    Ok(out)
}

struct Propensities<F>(Option<PropensityModel<F>>);

impl<F: Real> Propensities<F> {
    fn new(corpus: &Corpus) -> Self {
        match PropensityModel::from_corpus(corpus, F::lit(DEFAULT_PROPENSITY_A), F::lit(DEFAULT_PROPENSITY_B)) {
            Ok(m) => Propensities(Some(m)),
            Err(_) => {
                info!("fewer than 3 songs; training PSP uses unit propensities");
                Propensities(None)
            }
        }
    }

    fn get(&self, label: &str) -> Option<F> {
        match &self.0 {
            Some(m) => m.get(label),
            None => Some(F::one()),
        }
    }

    /// Mean PSP and PSnDCG of per-song rankings against gold labels.
    fn evaluate(&self, rankings: &[(&Song, Vec<String>)]) -> Result<(f64, f64)> {
        if rankings.is_empty() {
            return Ok((0.0, 0.0));
        }
        let lookup = |l: &str| self.get(l);
        let (mut a, mut b) = (0.0, 0.0);
        for (song, ranked) in rankings {
            a += psp::<F>(ranked, song.gold_labels(), &lookup)?.as_f64();
            b += psndcg::<F>(ranked, song.gold_labels(), &lookup)?.as_f64();
        }
        let n = rankings.len() as f64;
        Ok((a / n, b / n))
    }
}

fn top_k(scores: BTreeMap<String, f64>, k: usize) -> Vec<String> {
    let mut v: Vec<(String, f64)> = scores.into_iter().collect();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then_with(|| a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|(l, _)| l).collect()
}

/// Training-set PSP/PSnDCG of the binary classifier: every song's
/// candidates (gold included) ranked by confidence, cut at `k`. The song's
/// own stored pseudo-labels are left out of its ranking, since they are
/// training positives rather than errors.
fn classifier_train_psp<F: Real>(
    model: &BinaryClassifier<F>,
    corpus: &Corpus,
    embeddings: &EmbeddingTable<F>,
    docs: &DocVectors<F>,
    store: &PseudoLabelStore,
    props: &Propensities<F>,
    k: usize,
) -> Result<(f64, f64)> {
    let rankings: Vec<(&Song, Vec<String>)> = corpus
        .songs()
        .par_iter()
        .enumerate()
        .filter_map(|(pos, song)| docs.get(pos).map(|d| (song, d)))
        .map(|(song, doc)| {
            let mut cands = song.inference_candidates(corpus.gold_vocab());
            if let Some(own) = store.entries(song.id()) {
                cands.retain(|l| !own.contains_key(l));
            }
            cands.extend(song.gold_labels().iter().cloned());
            let scores = score_candidates(model, doc, &cands, embeddings)?;
            let scores = scores.into_iter().map(|(l, s)| (l, s.as_f64())).collect();
            Ok((song, top_k(scores, k)))
        })
        .collect::<Result<_>>()?;
    props.evaluate(&rankings)
}

/// Classifier pseudo-labels per embedded song: candidates minus gold with
/// confidence `>= threshold`, sorted by song position.
fn classifier_harvest<F: Real>(
    model: &BinaryClassifier<F>,
    corpus: &Corpus,
    embeddings: &EmbeddingTable<F>,
    docs: &DocVectors<F>,
    threshold: F,
) -> Result<Vec<(usize, BTreeMap<String, F>)>> {
    corpus
        .songs()
        .par_iter()
        .enumerate()
        .filter_map(|(pos, song)| docs.get(pos).map(|d| (pos, song, d)))
        .map(|(pos, song, doc)| {
            let cands = song.inference_candidates(corpus.gold_vocab());
            let mut scores = score_candidates(model, doc, &cands, embeddings)?;
            scores.retain(|_, c| *c >= threshold);
            Ok((pos, scores))
        })
        .collect()
}

fn initial_model<F: Real>(dim: usize, config: &PipelineConfig) -> BinaryClassifier<F> {
    if config.train.hidden_units == 0 {
        BinaryClassifier::zeros(dim)
    } else {
        BinaryClassifier::new(dim, config.train.hidden_units, &mut stream(config.seed, "init"))
    }
}

fn run_iterative<F: Real>(
    corpus: &Corpus,
    embeddings: &EmbeddingTable<F>,
    docs: &DocVectors<F>,
    config: &PipelineConfig,
) -> Result<RunOutput<F>> {
    let variant = config.variant;
    let max_records = match variant {
        Variant::DivaStatic => config.max_iterations.min(2),
        _ => config.max_iterations,
    };
    let props = Propensities::<F>::new(corpus);
    let theta = F::lit(config.train.pseudo_confidence_threshold);
    let mut model = initial_model::<F>(embeddings.dim(), config);
    let mut store = PseudoLabelStore::new();
    let mut out = RunOutput {
        model: FinalModel::None,
        selected_iteration: 0,
        predictions: Vec::new(),
        records: Vec::new(),
        store: PseudoLabelStore::new(),
        store_history: Vec::new(),
        iteration_models: Vec::new(),
        score_dumps: Vec::new(),
        skipped_songs: Vec::new(),
    };

    for it in 0..max_records {
        let mut rng = stream(config.seed, &format!("iteration/{it}"));
        let (mut new_classifier, mut new_joint) = (0, 0);
        let mut dump = Vec::new();
        if it > 0 {
            let cls = classifier_harvest(&model, corpus, embeddings, docs, theta)?;
            let previous = store.clone();
            let mut next = match variant {
                Variant::DivaLight => PseudoLabelStore::new(),
                _ => store.clone(),
            };
            for (pos, scores) in &cls {
                let song = &corpus.songs()[*pos];
                for (label, score) in scores {
                    let entry = PseudoEntry {
                        source: PseudoSource::Classifier,
                        iteration: it,
                        score: score.as_f64(),
                    };
                    if next.insert(song.id(), song.gold_labels(), label, entry) && !previous.contains(song.id(), label) {
                        new_classifier += 1;
                    }
                }
            }
            if variant.uses_joint() {
                let remaining: Vec<(usize, LabelSet)> = cls
                    .iter()
                    .map(|(pos, scores)| {
                        let song = &corpus.songs()[*pos];
                        let rest = song
                            .inference_candidates(corpus.gold_vocab())
                            .into_iter()
                            .filter(|l| !scores.contains_key(l) && !previous.contains(song.id(), l))
                            .collect();
                        (*pos, rest)
                    })
                    .collect();
                let mut known = corpus.gold_vocab().clone();
                known.extend(previous.all_labels());
                let all_remaining: LabelSet = remaining.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
                let scorer = JointScorer::new(corpus, embeddings, docs, &model, &known, &all_remaining, &config.score, &mut rng)?;
                let threshold = config.score.global_threshold.map(F::lit);
                let selected: Vec<Vec<JointScoreBreakdown<F>>> = remaining
                    .par_iter()
                    .map(|(pos, rest)| {
                        let song = &corpus.songs()[*pos];
                        let breakdowns = scorer.score_all(song, rest);
                        let picked = select_joint_pseudo_labels(&breakdowns, config.score.top_n, threshold);
                        picked
                            .into_iter()
                            .map(|(label, _)| breakdowns.iter().find(|b| b.label == label).expect("selected from breakdowns").clone())
                            .collect()
                    })
                    .collect();
                for b in selected.into_iter().flatten() {
                    let song = corpus.song(&b.song_id).expect("scored from corpus");
                    let entry = PseudoEntry {
                        source: PseudoSource::Joint,
                        iteration: it,
                        score: b.j.as_f64(),
                    };
                    if next.insert(song.id(), song.gold_labels(), &b.label, entry) && !previous.contains(song.id(), &b.label) {
                        new_joint += 1;
                    }
                    dump.push(b);
                }
            }
            store = next;
        }

        let history = train(&mut model, corpus, embeddings, docs, &store.label_map(), &config.train, &mut rng)?;
        let (train_psp, train_psndcg) = classifier_train_psp(&model, corpus, embeddings, docs, &store, &props, config.psp_k)?;
        let record = IterationRecord {
            iteration: it,
            new_classifier,
            new_joint,
            store_size: store.len(),
            train_psp,
            train_psndcg,
            loss_first: history.epoch_losses.first().copied(),
            loss_last: history.epoch_losses.last().copied(),
            pseudo_pairs_kept: history.pseudo_pairs_kept,
        };
        info!(
            "iteration {it}: +{new_classifier} classifier, +{new_joint} joint, store {}, train psp {train_psp:.4}",
            store.len()
        );
        out.records.push(record);
        out.store_history.push(store.clone());
        out.iteration_models.push(model.clone());
        out.score_dumps.push(dump);
        if stopping_check(&out.records, config.patience, config.stopping) {
            info!("stopping after iteration {it}");
            break;
        }
    }

    let selected = match config.selection {
        ModelSelection::BestPsp => best_psp_index(&out.records),
        ModelSelection::Last => out.records.len() - 1,
    };
    let model = out.iteration_models[selected].clone();
    out.predictions = classifier_predictions(&model, corpus, embeddings, docs, theta)?;
    out.model = FinalModel::Binary(model);
    out.store = store;
    out.selected_iteration = selected;
    Ok(out)
}

/// Gold labels (score 1) plus classifier inference at `threshold`, for
/// every song; songs without a document vector keep only their gold labels.
pub fn classifier_predictions<F: Real>(
    model: &BinaryClassifier<F>,
    corpus: &Corpus,
    embeddings: &EmbeddingTable<F>,
    docs: &DocVectors<F>,
    threshold: F,
) -> Result<Vec<SongPrediction>> {
    let inferred: BTreeMap<usize, BTreeMap<String, F>> = classifier_harvest(model, corpus, embeddings, docs, threshold)?.into_iter().collect();
    let mut preds: Vec<SongPrediction> = corpus
        .songs()
        .iter()
        .enumerate()
        .map(|(pos, song)| {
            let mut labels = gold_predictions(song);
            if let Some(scores) = inferred.get(&pos) {
                labels.extend(scores.iter().map(|(l, s)| PredictedLabel {
                    label: l.clone(),
                    score: s.as_f64(),
                    source: PredictionSource::Classifier,
                }));
            }
            SongPrediction::ranked(song.id(), labels)
        })
        .collect();
    preds.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(preds)
}

fn gold_predictions(song: &Song) -> Vec<PredictedLabel> {
    song.gold_labels()
        .iter()
        .map(|g| PredictedLabel {
            label: g.clone(),
            score: 1.0,
            source: PredictionSource::Gold,
        })
        .collect()
}

fn baseline_output<F>(model: FinalModel<F>, mut predictions: Vec<SongPrediction>, record: IterationRecord) -> RunOutput<F> {
    predictions.sort_by(|a, b| a.id.cmp(&b.id));
    RunOutput {
        model,
        selected_iteration: 0,
        predictions,
        records: vec![record],
        store: PseudoLabelStore::new(),
        store_history: vec![PseudoLabelStore::new()],
        iteration_models: Vec::new(),
        score_dumps: vec![Vec::new()],
        skipped_songs: Vec::new(),
    }
}

/// Each song's `top_n` tokens by TF-IDF. Gold labels are not excluded.
fn run_tfidf<F: Real>(corpus: &Corpus, config: &PipelineConfig) -> Result<RunOutput<F>> {
    let props = Propensities::<F>::new(corpus);
    let preds: Vec<SongPrediction> = corpus
        .songs()
        .par_iter()
        .map(|song| {
            let scores: BTreeMap<String, f64> = song
                .distinct_tokens()
                .map(|t| (t.clone(), tf_idf::<F>(t, song, corpus).as_f64()))
                .filter(|(_, s)| *s > 0.0)
                .collect();
            let labels = top_k(scores.clone(), config.score.top_n)
                .into_iter()
                .map(|l| PredictedLabel {
                    score: scores[&l],
                    label: l,
                    source: PredictionSource::Tfidf,
                })
                .collect();
            SongPrediction::ranked(song.id(), labels)
        })
        .collect();
    let rankings: Vec<(&Song, Vec<String>)> = corpus
        .songs()
        .iter()
        .zip(&preds)
        .map(|(s, p)| (s, p.ranked_labels().into_iter().take(config.psp_k).collect()))
        .collect();
    let (train_psp, train_psndcg) = props.evaluate(&rankings)?;
    let record = IterationRecord {
        iteration: 0,
        new_classifier: 0,
        new_joint: 0,
        store_size: 0,
        train_psp,
        train_psndcg,
        loss_first: None,
        loss_last: None,
        pseudo_pairs_kept: 0,
    };
    Ok(baseline_output(FinalModel::None, preds, record))
}

/// Fixed-vocabulary multi-label classifier; predicts gold labels plus every
/// vocabulary label with probability `>= 0.5`.
fn run_mlc<F: Real>(corpus: &Corpus, embeddings: &EmbeddingTable<F>, docs: &DocVectors<F>, config: &PipelineConfig) -> Result<RunOutput<F>> {
    let props = Propensities::<F>::new(corpus);
    let mut model = MlcModel::<F>::zeros(corpus.gold_vocab().iter().cloned().collect(), embeddings.dim());
    let losses = model.fit(corpus, docs, &config.train, &mut stream(config.seed, "mlc"))?;
    let half = F::lit(0.5);
    let mut preds = Vec::with_capacity(corpus.n_songs());
    let mut rankings = Vec::new();
    for (pos, song) in corpus.songs().iter().enumerate() {
        let mut labels = gold_predictions(song);
        if let Some(doc) = docs.get(pos) {
            let probs = model.predict(doc)?;
            let all: BTreeMap<String, f64> = model.labels.iter().cloned().zip(probs.iter().map(|p| p.as_f64())).collect();
            rankings.push((song, top_k(all, config.psp_k)));
            for (l, &p) in model.labels.iter().zip(&probs) {
                if p >= half && !song.gold_labels().contains(l) {
                    labels.push(PredictedLabel {
                        label: l.clone(),
                        score: p.as_f64(),
                        source: PredictionSource::Mlc,
                    });
                }
            }
        }
        preds.push(SongPrediction::ranked(song.id(), labels));
    }
    let (train_psp, train_psndcg) = props.evaluate(&rankings)?;
    let record = IterationRecord {
        iteration: 0,
        new_classifier: 0,
        new_joint: 0,
        store_size: 0,
        train_psp,
        train_psndcg,
        loss_first: losses.first().copied(),
        loss_last: losses.last().copied(),
        pseudo_pairs_kept: 0,
    };
    Ok(baseline_output(FinalModel::Mlc(model), preds, record))
}
