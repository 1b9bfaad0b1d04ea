//! Joint score `J = SI · SN · PV · DA` over candidate labels.
//!
//! * SI: TF-IDF of the candidate in the song's comments.
//! * SN: semantic novelty against an ensemble of k-means clusterings of the
//!   labels already known to the classifier.
//! * PV: 1 when the classifier's mean confidence for the candidate over all
//!   songs reaches τ.
//! * DA: 1 when the coefficient of variation of the candidate's per-song
//!   counts reaches τ.

pub mod kmeans;

use std::collections::BTreeMap;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{BinaryClassifier, DocVectors};
use crate::corpus::{Corpus, LabelSet, Song};
use crate::embedding::{cosine, EmbeddingTable};
use crate::error::{DivaError, Result};
use crate::num::Real;
use crate::rng::DivaRng;

pub use kmeans::{kmeans, kmeans_best_of, KMeansResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnAggregation {
    Min,
    Max,
}

impl std::str::FromStr for SnAggregation {
    type Err = DivaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(SnAggregation::Min),
            "max" => Ok(SnAggregation::Max),
            other => Err(DivaError::validation(format!("unknown sn aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Si,
    Sn,
    Pv,
    Da,
}

impl std::str::FromStr for Factor {
    type Err = DivaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "si" => Ok(Factor::Si),
            "sn" => Ok(Factor::Sn),
            "pv" => Ok(Factor::Pv),
            "da" => Ok(Factor::Da),
            other => Err(DivaError::validation(format!("unknown score factor `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConfig {
    /// Number of independent clusterings.
    pub m: usize,
    /// Clusters per clustering; `None` means ⌈√(number of known labels)⌉.
    pub k: Option<usize>,
    pub kmeans_iters: usize,
    /// Threshold shared by PV and DA.
    pub tau: f64,
    pub top_n: usize,
    /// When set, select every candidate with `j >= threshold` instead of the top `top_n`.
    pub global_threshold: Option<f64>,
    pub enable_si: bool,
    pub enable_sn: bool,
    pub enable_pv: bool,
    pub enable_da: bool,
    pub sn_aggregation: SnAggregation,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            m: 5,
            k: None,
            kmeans_iters: 50,
            tau: 0.5,
            top_n: 5,
            global_threshold: None,
            enable_si: true,
            enable_sn: true,
            enable_pv: true,
            enable_da: true,
            sn_aggregation: SnAggregation::Min,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(DivaError::validation("score config: m must be at least 1"));
        }
        if self.k == Some(0) {
            return Err(DivaError::validation("score config: k must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(DivaError::validation("score config: tau must be in (0, 1)"));
        }
        if self.top_n == 0 {
            return Err(DivaError::validation("score config: top_n must be at least 1"));
        }
        Ok(())
    }

    pub fn ablate(&mut self, factor: Factor) {
        match factor {
            Factor::Si => self.enable_si = false,
            Factor::Sn => self.enable_sn = false,
            Factor::Pv => self.enable_pv = false,
            Factor::Da => self.enable_da = false,
        }
    }

    pub fn enabled(&self, factor: Factor) -> bool {
        match factor {
            Factor::Si => self.enable_si,
            Factor::Sn => self.enable_sn,
            Factor::Pv => self.enable_pv,
            Factor::Da => self.enable_da,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct JointScoreBreakdown<F> {
    pub song_id: String,
    pub label: String,
    pub si: F,
    pub sn: F,
    pub pv: F,
    pub da: F,
    pub j: F,
}

impl<F: Real> JointScoreBreakdown<F> {
    /// Combines factor values; disabled factors enter as 1.
    pub fn combine(song_id: &str, label: &str, si: F, sn: F, pv: F, da: F, config: &ScoreConfig) -> Self {
        let gate = |f: Factor, v: F| if config.enabled(f) { v } else { F::one() };
        let (si, sn, pv, da) = (gate(Factor::Si, si), gate(Factor::Sn, sn), gate(Factor::Pv, pv), gate(Factor::Da, da));
        JointScoreBreakdown {
            song_id: song_id.to_string(),
            label: label.to_string(),
            si,
            sn,
            pv,
            da,
            j: si * sn * pv * da,
        }
    }
}

/// TF-IDF of `label` in `song`: relative in-song frequency times
/// `ln(N / document frequency)`. Zero when the label is not in the song or
/// in no song at all.
pub fn tf_idf<F: Real>(label: &str, song: &Song, corpus: &Corpus) -> F {
    let count = song.count(label);
    let df = corpus.document_frequency(label);
    if count == 0 || df == 0 || song.total_tokens() == 0 {
        return F::zero();
    }
    let tf = F::from_count(count) / F::from_count(song.total_tokens());
    let idf = (F::from_count(corpus.n_songs()) / F::from_count(df)).ln();
    tf * idf
}

/// Population coefficient of variation; `None` when the mean is zero.
pub fn coefficient_of_variation<F: Real>(counts: &[F]) -> Option<F> {
    if counts.is_empty() {
        return None;
    }
    let n = F::from_count(counts.len());
    let mean = counts.iter().copied().sum::<F>() / n;
    if mean == F::zero() {
        return None;
    }
    let var = counts.iter().map(|&c| (c - mean) * (c - mean)).sum::<F>() / n;
    Some(var.sqrt() / mean)
}

/// DA: 1 when the CV of per-song occurrence counts (zeros included) is at least τ.
pub fn discrimination_ability<F: Real>(label: &str, corpus: &Corpus, tau: F) -> F {
    let counts: Vec<F> = corpus.songs().iter().map(|s| F::from_count(s.count(label))).collect();
    match coefficient_of_variation(&counts) {
        Some(cv) if cv >= tau => F::one(),
        _ => F::zero(),
    }
}

/// Indicator `mean_confidence >= τ`.
pub fn practical_value_from_mean<F: Real>(mean_confidence: F, tau: F) -> F {
    if mean_confidence >= tau {
        F::one()
    } else {
        F::zero()
    }
}

/// Mean classifier confidence of `label_vec` over every embedded song.
pub fn mean_confidence<F: Real>(model: &BinaryClassifier<F>, docs: &DocVectors<F>, label_vec: &[F]) -> Result<Option<F>> {
    let mut total = F::zero();
    let mut n = 0usize;
    for i in 0..docs.len() {
        if let Some(d) = docs.get(i) {
            total = total + model.forward(d, label_vec)?;
            n += 1;
        }
    }
    Ok((n > 0).then(|| total / F::from_count(n)))
}

/// PV for one candidate; songs without a document vector are left out of the mean.
pub fn practical_value<F: Real>(
    label: &str,
    model: &BinaryClassifier<F>,
    docs: &DocVectors<F>,
    embeddings: &EmbeddingTable<F>,
    tau: F,
) -> Result<F> {
    let y = embeddings.embed_label(label)?;
    Ok(match mean_confidence(model, docs, y)? {
        Some(mean) => practical_value_from_mean(mean, tau),
        None => F::zero(),
    })
}

/// `m` independent k-means clusterings of the known labels' vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterEnsemble<F> {
    clusterings: Vec<Vec<Vec<F>>>,
}

impl<F: Real> ClusterEnsemble<F> {
    pub fn build<P: AsRef<[F]>>(points: &[P], m: usize, k: Option<usize>, iters: usize, rng: &mut DivaRng) -> Result<Self> {
        if points.is_empty() {
            return Ok(ClusterEnsemble { clusterings: Vec::new() });
        }
        let k = k.unwrap_or_else(|| (points.len() as f64).sqrt().ceil() as usize).max(1);
        let clusterings = (0..m)
            .map(|_| kmeans(points, k, iters, rng).map(|r| r.centers))
            .collect::<Result<_>>()?;
        Ok(ClusterEnsemble { clusterings })
    }

    pub fn from_centers(clusterings: Vec<Vec<Vec<F>>>) -> Self {
        ClusterEnsemble { clusterings }
    }

    pub fn m(&self) -> usize {
        self.clusterings.len()
    }

    pub fn clusterings(&self) -> &[Vec<Vec<F>>] {
        &self.clusterings
    }

    pub fn is_empty(&self) -> bool {
        self.clusterings.is_empty()
    }

    /// SN = ½ · Σᵢ (1 − agg_k cos(y, centerᵢₖ)) / m. Zero-norm centers are
    /// ignored; an ensemble with no clusterings yields 1.
    pub fn semantic_novelty(&self, y: &[F], aggregation: SnAggregation) -> Result<F> {
        if self.clusterings.is_empty() {
            return Ok(F::one());
        }
        let half = F::lit(0.5);
        let m = F::from_count(self.clusterings.len());
        let mut total = F::zero();
        for centers in &self.clusterings {
            let mut agg: Option<F> = None;
            for c in centers {
                let sim = match cosine(y, c) {
                    Ok(s) => s,
                    Err(DivaError::DegenerateVector) => continue,
                    Err(e) => return Err(e),
                };
                agg = Some(match (agg, aggregation) {
                    (None, _) => sim,
                    (Some(a), SnAggregation::Min) => a.min(sim),
                    (Some(a), SnAggregation::Max) => a.max(sim),
                });
            }
            total = total + (F::one() - agg.unwrap_or_else(F::zero)) / m;
        }
        Ok(half * total)
    }
}

/// Label-level factor values shared across songs.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LabelFactors<F> {
    sn: F,
    pv: F,
    da: F,
}

/// Frozen scoring context for one iteration: model, cluster ensemble and
/// per-label factors.
pub struct JointScorer<'a, F> {
    corpus: &'a Corpus,
    config: &'a ScoreConfig,
    factors: BTreeMap<String, LabelFactors<F>>,
}

impl<'a, F: Real> JointScorer<'a, F> {
    /// Builds the cluster ensemble over `known_labels` and precomputes SN,
    /// PV and DA for every embeddable label in `candidates`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        corpus: &'a Corpus,
        embeddings: &EmbeddingTable<F>,
        docs: &DocVectors<F>,
        model: &BinaryClassifier<F>,
        known_labels: &LabelSet,
        candidates: &LabelSet,
        config: &'a ScoreConfig,
        rng: &mut DivaRng,
    ) -> Result<Self> {
        config.validate()?;
        let known: Vec<&[F]> = known_labels.iter().filter_map(|l| embeddings.get(l)).collect();
        if known.is_empty() {
            info!("no known labels to cluster; semantic novelty defaults to 1");
        }
        let ensemble = if config.enable_sn {
            ClusterEnsemble::build(&known, config.m, config.k, config.kmeans_iters, rng)?
        } else {
            ClusterEnsemble::from_centers(Vec::new())
        };
        let tau = F::lit(config.tau);
        let labels: Vec<&String> = candidates.iter().filter(|c| embeddings.contains(c)).collect();
        let computed: Vec<(String, LabelFactors<F>)> = labels
            .par_iter()
            .map(|&label| {
                let y = embeddings.get(label).expect("filtered to embeddable");
                let sn = if config.enable_sn {
                    ensemble.semantic_novelty(y, config.sn_aggregation)?
                } else {
                    F::one()
                };
                let pv = if config.enable_pv {
                    practical_value(label, model, docs, embeddings, tau)?
                } else {
                    F::one()
                };
                let da = if config.enable_da {
                    discrimination_ability(label, corpus, tau)
                } else {
                    F::one()
                };
                Ok((label.clone(), LabelFactors { sn, pv, da }))
            })
            .collect::<Result<_>>()?;
        Ok(JointScorer {
            corpus,
            config,
            factors: computed.into_iter().collect(),
        })
    }

    /// Breakdown for one (song, candidate); `None` when the candidate has no embedding.
    pub fn score(&self, song: &Song, label: &str) -> Option<JointScoreBreakdown<F>> {
        let f = self.factors.get(label)?;
        let si = if self.config.enable_si {
            tf_idf(label, song, self.corpus)
        } else {
            F::one()
        };
        Some(JointScoreBreakdown::combine(song.id(), label, si, f.sn, f.pv, f.da, self.config))
    }

    pub fn score_all(&self, song: &Song, candidates: &LabelSet) -> Vec<JointScoreBreakdown<F>> {
        let out: Vec<_> = candidates.iter().filter_map(|c| self.score(song, c)).collect();
        if out.len() < candidates.len() {
            warn!(
                "song `{}`: {} candidates without embeddings skipped",
                song.id(),
                candidates.len() - out.len()
            );
        }
        out
    }
}

/// Top `top_n` candidates by joint score (ties by label), never selecting
/// a zero score. With a global threshold, every score `>= threshold` is taken.
pub fn select_joint_pseudo_labels<F: Real>(
    breakdowns: &[JointScoreBreakdown<F>],
    top_n: usize,
    global_threshold: Option<F>,
) -> Vec<(String, F)> {
    let mut ranked: Vec<&JointScoreBreakdown<F>> = breakdowns.iter().filter(|b| b.j > F::zero()).collect();
    ranked.sort_by(|a, b| b.j.partial_cmp(&a.j).expect("finite scores").then_with(|| a.label.cmp(&b.label)));
    match global_threshold {
        Some(t) => ranked.into_iter().filter(|b| b.j >= t).map(|b| (b.label.clone(), b.j)).collect(),
        None => ranked.into_iter().take(top_n).map(|b| (b.label.clone(), b.j)).collect(),
    }
}
