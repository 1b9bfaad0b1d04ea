//! Binary classifier over concatenated (document, label) vectors.
//!
//! The default model is an affine map of `d ⊕ y` followed by a sigmoid.
//! With `hidden_units > 0` a tanh hidden layer is added on top of the affine
//! term, which lets the score depend on document/label interactions.
//!
//! Parameters live in one flat vector laid out as
//! `[w (2·dim) | b | U (units × 2·dim) | c (units) | v (units)]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use log::{debug, warn};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelSet, Song};
use crate::embedding::EmbeddingTable;
use crate::error::{DivaError, Result};
use crate::fingerprint::fingerprint;
use crate::num::{dot, sigmoid, Real};
use crate::rng::DivaRng;

pub const PROBABILITY_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryClassifier<F> {
    dim: usize,
    hidden_units: usize,
    params: Vec<F>,
}

impl<F: Real> BinaryClassifier<F> {
    /// Affine model with all parameters zero.
    pub fn zeros(dim: usize) -> Self {
        BinaryClassifier {
            dim,
            hidden_units: 0,
            params: vec![F::zero(); 2 * dim + 1],
        }
    }

    /// Model with `hidden_units` tanh units. Hidden input weights are drawn
    /// from N(0, 1/(2·dim)), output weights from N(0, 1/hidden_units); the
    /// affine part and all biases start at zero.
    pub fn new<R: Rng>(dim: usize, hidden_units: usize, rng: &mut R) -> Self {
        let mut m = BinaryClassifier {
            dim,
            hidden_units,
            params: vec![F::zero(); Self::param_len(dim, hidden_units)],
        };
        if hidden_units > 0 {
            let scale = 1.0 / ((2 * dim) as f64).sqrt();
            let start = 2 * dim + 1;
            for p in &mut m.params[start..start + hidden_units * 2 * dim] {
                *p = F::lit(scale * rng.sample::<f64, _>(StandardNormal));
            }
            let out_scale = 1.0 / (hidden_units as f64).sqrt();
            let v_start = start + hidden_units * (2 * dim + 1);
            for p in &mut m.params[v_start..] {
                *p = F::lit(out_scale * rng.sample::<f64, _>(StandardNormal));
            }
        }
        m
    }

    /// Affine model from explicit weights and bias.
    pub fn from_parts(weights: Vec<F>, bias: F) -> Result<Self> {
        if weights.is_empty() || weights.len() % 2 != 0 {
            return Err(DivaError::validation("weight vector length must be a positive even number"));
        }
        let dim = weights.len() / 2;
        let mut params = weights;
        params.push(bias);
        Ok(BinaryClassifier {
            dim,
            hidden_units: 0,
            params,
        })
    }

    fn param_len(dim: usize, units: usize) -> usize {
        2 * dim + 1 + units * (2 * dim + 2)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden_units
    }

    pub fn weights(&self) -> &[F] {
        &self.params[..2 * self.dim]
    }

    pub fn bias(&self) -> F {
        self.params[2 * self.dim]
    }

    pub fn set_bias(&mut self, bias: F) {
        let i = 2 * self.dim;
        self.params[i] = bias;
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    fn check_shapes(&self, d: &[F], y: &[F]) -> Result<()> {
        for v in [d, y] {
            if v.len() != self.dim {
                return Err(DivaError::Shape {
                    expected: self.dim,
                    actual: v.len(),
                });
            }
        }
        Ok(())
    }

    fn dot_split(row: &[F], d: &[F], y: &[F]) -> F {
        let dim = d.len();
        dot(&row[..dim], d) + dot(&row[dim..], y)
    }

    /// Logit plus the tanh activations of the hidden units (written to `act`).
    fn logit_with_activations(&self, d: &[F], y: &[F], act: &mut Vec<F>) -> F {
        let two_d = 2 * self.dim;
        let units = self.hidden_units;
        let c_start = two_d + 1 + units * two_d;
        let v_start = c_start + units;
        let mut z = self.bias() + Self::dot_split(&self.params[..two_d], d, y);
        act.clear();
        for h in 0..units {
            let row = &self.params[two_d + 1 + h * two_d..two_d + 1 + (h + 1) * two_d];
            let a = (Self::dot_split(row, d, y) + self.params[c_start + h]).tanh();
            z = z + self.params[v_start + h] * a;
            act.push(a);
        }
        z
    }

    pub fn logit(&self, d: &[F], y: &[F]) -> Result<F> {
        self.check_shapes(d, y)?;
        Ok(self.logit_with_activations(d, y, &mut Vec::with_capacity(self.hidden_units)))
    }

    /// Confidence that `y` is a label of the document `d`.
    pub fn forward(&self, d: &[F], y: &[F]) -> Result<F> {
        self.logit(d, y).map(sigmoid)
    }

    /// Adds `scale · ∂logit/∂θ` to `grad`, given the activations of the same input.
    fn accumulate_logit_gradient(&self, d: &[F], y: &[F], act: &[F], scale: F, grad: &mut [F]) {
        let dim = self.dim;
        let two_d = 2 * dim;
        let axpy = |g: &mut [F], a: F, d: &[F], y: &[F]| {
            for (g, &x) in g[..dim].iter_mut().zip(d) {
                *g = *g + a * x;
            }
            for (g, &x) in g[dim..two_d].iter_mut().zip(y) {
                *g = *g + a * x;
            }
        };
        axpy(&mut grad[..two_d], scale, d, y);
        grad[two_d] = grad[two_d] + scale;
        let units = self.hidden_units;
        let c_start = two_d + 1 + units * two_d;
        let v_start = c_start + units;
        for (h, &a) in act.iter().enumerate() {
            let v = self.params[v_start + h];
            grad[v_start + h] = grad[v_start + h] + scale * a;
            let back = scale * v * (F::one() - a * a);
            grad[c_start + h] = grad[c_start + h] + back;
            let row = two_d + 1 + h * two_d;
            axpy(&mut grad[row..row + two_d], back, d, y);
        }
    }

    /// Weighted summed binary cross-entropy over `examples` and its gradient.
    pub fn loss_and_gradient(&self, examples: &[Example<'_, F>]) -> Result<(F, Vec<F>)> {
        let mut grad = vec![F::zero(); self.params.len()];
        let mut act = Vec::with_capacity(self.hidden_units);
        let mut total = F::zero();
        for ex in examples {
            self.check_shapes(ex.doc, ex.label)?;
            let c = sigmoid(self.logit_with_activations(ex.doc, ex.label, &mut act));
            total = total + ex.weight * bce_loss(c, ex.target);
            self.accumulate_logit_gradient(ex.doc, ex.label, &act, ex.weight * (c - ex.target), &mut grad);
        }
        Ok((total, grad))
    }

    /// Gradient of the weighted summed binary cross-entropy over `examples`.
    pub fn loss_gradient(&self, examples: &[Example<'_, F>]) -> Result<Vec<F>> {
        self.loss_and_gradient(examples).map(|(_, g)| g)
    }

    pub fn summed_loss(&self, examples: &[Example<'_, F>]) -> Result<F> {
        let mut total = F::zero();
        for ex in examples {
            total = total + ex.weight * bce_loss(self.forward(ex.doc, ex.label)?, ex.target);
        }
        Ok(total)
    }

    /// One gradient step: `θ ← θ − lr · grad`.
    pub fn step(&mut self, grad: &[F], learning_rate: F) {
        for (p, &g) in self.params.iter_mut().zip(grad) {
            *p = *p - learning_rate * g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn to_checkpoint(&self, config: &TrainConfig) -> Checkpoint<F> {
        let two_d = 2 * self.dim;
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            dim: self.dim,
            hidden_units: self.hidden_units,
            weights: self.weights().to_vec(),
            bias: self.bias(),
            hidden_params: self.params[two_d + 1..].to_vec(),
            config_fingerprint: fingerprint(config),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint<F>) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(DivaError::validation(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.weights.len() != 2 * ck.dim
            || ck.hidden_params.len() != ck.hidden_units * (2 * ck.dim + 2)
        {
            return Err(DivaError::validation("checkpoint parameter lengths disagree with dim"));
        }
        let mut params = ck.weights;
        params.push(ck.bias);
        params.extend(ck.hidden_params);
        let m = BinaryClassifier {
            dim: ck.dim,
            hidden_units: ck.hidden_units,
            params,
        };
        if !m.is_finite() {
            return Err(DivaError::validation("checkpoint contains non-finite parameters"));
        }
        Ok(m)
    }

    pub fn save(&self, config: &TrainConfig, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(&self.to_checkpoint(config))
            .map_err(|e| DivaError::Internal(e.to_string()))?;
        fs::write(path, body + "\n").map_err(|e| DivaError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path).map_err(|e| DivaError::io(path, e))?;
        let ck: Checkpoint<F> = serde_json::from_str(&body).map_err(|e| DivaError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::from_checkpoint(ck)
    }
}

pub const CHECKPOINT_FORMAT: &str = "diva-binary-classifier";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model: pretty-printed JSON with the fields below. Floats are
/// written in shortest round-trip form, so save/load is lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Checkpoint<F> {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub hidden_units: usize,
    /// Affine weights, document half first.
    pub weights: Vec<F>,
    pub bias: F,
    /// Hidden layer `[U row-major | c | v]`; empty for the affine model.
    pub hidden_params: Vec<F>,
    /// SHA-256 of the JSON-encoded training config.
    pub config_fingerprint: String,
}

/// Binary cross-entropy with the confidence clamped to `[ε, 1 − ε]`.
pub fn bce_loss<F: Real>(confidence: F, target: F) -> F {
    let eps = F::lit(PROBABILITY_EPSILON);
    let c = confidence.max(eps).min(F::one() - eps);
    -(target * c.ln() + (F::one() - target) * (F::one() - c).ln())
}

/// A resolved training instance.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a, F> {
    pub doc: &'a [F],
    pub label: &'a [F],
    pub target: F,
    pub weight: F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Gold,
    Pseudo,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub song_id: String,
    pub label: String,
    pub target: u8,
    pub weight: f64,
    pub source: PairSource,
}

impl TrainingPair {
    pub fn positive(song_id: &str, label: &str, source: PairSource) -> Self {
        TrainingPair {
            song_id: song_id.to_string(),
            label: label.to_string(),
            target: 1,
            weight: 1.0,
            source,
        }
    }

    pub fn negative(song_id: &str, label: &str) -> Self {
        TrainingPair {
            song_id: song_id.to_string(),
            label: label.to_string(),
            target: 0,
            weight: 1.0,
            source: PairSource::Negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub subsample_threshold: f64,
    pub pseudo_confidence_threshold: f64,
    /// 0 selects the affine model.
    pub hidden_units: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 20,
            batch_size: 32,
            negatives_per_positive: 3,
            subsample_threshold: 1e-3,
            pseudo_confidence_threshold: 0.9,
            hidden_units: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DivaError::validation(format!("train config: {m}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be at least 1");
        }
        if !(self.subsample_threshold > 0.0) {
            return bad("subsample_threshold must be positive");
        }
        if !(self.pseudo_confidence_threshold >= 0.0 && self.pseudo_confidence_threshold < 1.0) {
            return bad("pseudo_confidence_threshold must be in [0, 1)");
        }
        Ok(())
    }
}

/// Document vectors indexed by song position; `None` for songs with no
/// in-vocabulary token.
#[derive(Debug, Clone)]
pub struct DocVectors<F> {
    vectors: Vec<Option<Vec<F>>>,
}

impl<F: Real> DocVectors<F> {
    pub fn compute(corpus: &Corpus, embeddings: &EmbeddingTable<F>) -> Self {
        let vectors = corpus
            .songs()
            .iter()
            .map(|s| match embeddings.embed_document(s) {
                Ok(v) => Some(v),
                Err(e) => {
                    warn!("{e}; song skipped");
                    None
                }
            })
            .collect();
        DocVectors { vectors }
    }

    pub fn get(&self, position: usize) -> Option<&[F]> {
        self.vectors.get(position).and_then(|v| v.as_deref())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn embedded_count(&self) -> usize {
        self.vectors.iter().filter(|v| v.is_some()).count()
    }
}

/// Up to `k` labels drawn uniformly without replacement from `pool − exclusions`.
pub fn sample_negatives<R: Rng>(pool: &LabelSet, exclusions: &LabelSet, k: usize, rng: &mut R) -> Vec<String> {
    let eligible: Vec<&String> = pool.iter().filter(|l| !exclusions.contains(*l)).collect();
    if eligible.is_empty() {
        debug!("negative sampling: empty effective pool");
        return Vec::new();
    }
    let n = k.min(eligible.len());
    index::sample(rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i].clone())
        .collect()
}

/// Keep probability of a pseudo-label with relative frequency `f`.
pub fn keep_probability(frequency: f64, threshold: f64) -> f64 {
    if frequency <= 0.0 {
        return 1.0;
    }
    (threshold / frequency).sqrt().min(1.0)
}

/// Frequency subsampling of pseudo-positive pairs. Non-pseudo pairs pass through.
pub fn subsample<R: Rng>(pairs: Vec<TrainingPair>, threshold: f64, rng: &mut R) -> Vec<TrainingPair> {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = 0usize;
    for p in pairs.iter().filter(|p| p.source == PairSource::Pseudo && p.target == 1) {
        *freq.entry(p.label.as_str()).or_insert(0) += 1;
        total += 1;
    }
    let keep: BTreeMap<String, f64> = freq
        .into_iter()
        .map(|(l, c)| (l.to_string(), keep_probability(c as f64 / total as f64, threshold)))
        .collect();
    pairs
        .into_iter()
        .filter(|p| {
            if p.source != PairSource::Pseudo || p.target != 1 {
                return true;
            }
            let q = keep[&p.label];
            q >= 1.0 || rng.gen::<f64>() < q
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean per-pair BCE for each epoch, measured during the pass.
    pub epoch_losses: Vec<f64>,
    pub gold_pairs: usize,
    pub pseudo_pairs: usize,
    pub pseudo_pairs_kept: usize,
    pub skipped_songs: Vec<String>,
}

/// Mini-batch gradient descent on gold positives, the given pseudo-labels
/// (after subsampling) and `k` negatives per positive, drawn afresh each
/// epoch from the song's training candidates minus its gold and pseudo
/// labels. `pseudo` maps song id to its pseudo-labels.
pub fn train<F: Real>(
    model: &mut BinaryClassifier<F>,
    corpus: &Corpus,
    embeddings: &EmbeddingTable<F>,
    docs: &DocVectors<F>,
    pseudo: &BTreeMap<String, LabelSet>,
    config: &TrainConfig,
    rng: &mut DivaRng,
) -> Result<TrainHistory> {
    config.validate()?;
    if model.dim() != embeddings.dim() {
        return Err(DivaError::Shape {
            expected: model.dim(),
            actual: embeddings.dim(),
        });
    }
    let empty = BTreeSet::new();
    let mut history = TrainHistory::default();
    let mut positives = Vec::new();
    let mut pools: Vec<Vec<String>> = vec![Vec::new(); corpus.n_songs()];
    for (pos, song) in corpus.songs().iter().enumerate() {
        if docs.get(pos).is_none() {
            warn!("song `{}` has no document vector; skipped in training", song.id());
            history.skipped_songs.push(song.id().to_string());
            continue;
        }
        let song_pseudo = pseudo.get(song.id()).unwrap_or(&empty);
        for g in song.gold_labels().iter().filter(|g| embeddings.contains(g)) {
            positives.push(TrainingPair::positive(song.id(), g, PairSource::Gold));
        }
        for p in song_pseudo.iter().filter(|p| embeddings.contains(p)) {
            if !song.gold_labels().contains(p) {
                positives.push(TrainingPair::positive(song.id(), p, PairSource::Pseudo));
            }
        }
        let exclusions: LabelSet = song.gold_labels().union(song_pseudo).cloned().collect();
        pools[pos] = negative_pool(song, &exclusions, embeddings);
    }
    history.gold_pairs = positives.iter().filter(|p| p.source == PairSource::Gold).count();
    history.pseudo_pairs = positives.len() - history.gold_pairs;
    let positives = subsample(positives, config.subsample_threshold, rng);
    history.pseudo_pairs_kept = positives.len() - history.gold_pairs;
    if positives.is_empty() {
        return Err(DivaError::Training("no positive training pairs".into()));
    }

    let lr = F::lit(config.learning_rate);
    for _ in 0..config.epochs {
        let mut pairs: Vec<(usize, &str, F)> = Vec::with_capacity(positives.len() * (1 + config.negatives_per_positive));
        for p in &positives {
            let pos = corpus.position(&p.song_id).expect("pair from corpus");
            pairs.push((pos, p.label.as_str(), F::one()));
            let pool = &pools[pos];
            let n = config.negatives_per_positive.min(pool.len());
            for i in index::sample(rng, pool.len(), n) {
                pairs.push((pos, pool[i].as_str(), F::zero()));
            }
        }
        pairs.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in pairs.chunks(config.batch_size) {
            let examples: Vec<Example<'_, F>> = batch
                .iter()
                .map(|&(pos, label, target)| Example {
                    doc: docs.get(pos).expect("embedded song"),
                    label: embeddings.get(label).expect("embeddable label"),
                    target,
                    weight: F::one(),
                })
                .collect();
            let (loss, grad) = model.loss_and_gradient(&examples)?;
            epoch_loss += loss.as_f64();
            model.step(&grad, lr);
        }
        if !model.is_finite() {
            return Err(DivaError::Training("parameters diverged to non-finite values".into()));
        }
        history.epoch_losses.push(epoch_loss / pairs.len() as f64);
    }
    Ok(history)
}

/// Embeddable training candidates of `song` not in `exclusions`, sorted.
fn negative_pool<F: Real>(song: &Song, exclusions: &LabelSet, embeddings: &EmbeddingTable<F>) -> Vec<String> {
    song.training_candidates()
        .into_iter()
        .filter(|l| !exclusions.contains(l) && embeddings.contains(l))
        .collect()
}

/// Confidence of every embeddable candidate for `song`.
pub fn score_candidates<F: Real>(
    model: &BinaryClassifier<F>,
    doc: &[F],
    candidates: &LabelSet,
    embeddings: &EmbeddingTable<F>,
) -> Result<BTreeMap<String, F>> {
    let mut out = BTreeMap::new();
    for c in candidates {
        if let Some(y) = embeddings.get(c) {
            out.insert(c.clone(), model.forward(doc, y)?);
        }
    }
    Ok(out)
}

/// Candidates whose confidence reaches `threshold`, with their scores.
pub fn infer_pseudo_labels<F: Real>(
    model: &BinaryClassifier<F>,
    song: &Song,
    candidates: &LabelSet,
    embeddings: &EmbeddingTable<F>,
    threshold: F,
) -> Result<BTreeMap<String, F>> {
    let doc = match embeddings.embed_document(song) {
        Ok(d) => d,
        Err(DivaError::EmptyDocument(id)) => {
            warn!("song `{id}` has no in-vocabulary tokens; no pseudo-labels inferred");
            return Ok(BTreeMap::new());
        }
        Err(e) => return Err(e),
    };
    let mut scores = score_candidates(model, &doc, candidates, embeddings)?;
    scores.retain(|_, c| *c >= threshold);
    Ok(scores)
}
