//! Set, ranking, propensity-scored, soft-matching and coverage metrics.
//!
//! Conventions: an empty prediction or reference set scores 0 rather than
//! NaN; corpus-level F1 and soft F1 are the harmonic means of the averaged
//! precision and recall; negative cosines count as 0 in soft matching.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelSet};
use crate::embedding::{cosine, EmbeddingTable};
use crate::error::{DivaError, Result};
use crate::num::Real;

pub const DEFAULT_PROPENSITY_A: f64 = 0.55;
pub const DEFAULT_PROPENSITY_B: f64 = 1.5;

fn harmonic<F: Real>(p: F, r: F) -> F {
    if p + r > F::zero() {
        F::lit(2.0) * p * r / (p + r)
    } else {
        F::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf<F> {
    pub precision: F,
    pub recall: F,
    pub f1: F,
}

pub fn prf1<F: Real>(pred: &LabelSet, reference: &LabelSet) -> Prf<F> {
    let hits = F::from_count(pred.intersection(reference).count());
    let precision = if pred.is_empty() { F::zero() } else { hits / F::from_count(pred.len()) };
    let recall = if reference.is_empty() { F::zero() } else { hits / F::from_count(reference.len()) };
    Prf {
        precision,
        recall,
        f1: harmonic(precision, recall),
    }
}

fn check_unique(ranked: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for l in ranked {
        if !seen.insert(l) {
            return Err(DivaError::validation(format!("label `{l}` appears twice in a ranking")));
        }
    }
    Ok(())
}

fn discount<F: Real>(rank: usize) -> F {
    // rank is 0-based: 1 / log2(rank + 2)
    F::one() / F::from_count(rank + 2).log2()
}

/// Binary-relevance nDCG with the ideal list of `min(|pred|, |ref|)` hits.
pub fn ndcg<F: Real>(pred_ranked: &[String], reference: &LabelSet) -> Result<F> {
    check_unique(pred_ranked)?;
    if reference.is_empty() || pred_ranked.is_empty() {
        return Ok(F::zero());
    }
    let dcg: F = pred_ranked
        .iter()
        .enumerate()
        .filter(|(_, l)| reference.contains(*l))
        .map(|(r, _)| discount::<F>(r))
        .sum();
    let ideal: F = (0..pred_ranked.len().min(reference.len())).map(discount::<F>).sum();
    Ok(dcg / ideal)
}

/// `1 / (1 + (ln N − 1)(b+1)^a e^{−a ln(N·prior + b)})`. Only meaningful for
/// N ≥ 3, where `ln N > 1`.
pub fn propensity<F: Real>(n: usize, prior: F, a: F, b: F) -> F {
    let n_f = F::from_count(n);
    let c = (n_f.ln() - F::one()) * (b + F::one()).powf(a);
    F::one() / (F::one() + c * (-a * (n_f * prior + b).ln()).exp())
}

/// Label propensities estimated from gold-label priors.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel<F> {
    pub a: F,
    pub b: F,
    pub n: usize,
    priors: BTreeMap<String, F>,
}

impl<F: Real> PropensityModel<F> {
    pub fn new(n: usize, priors: BTreeMap<String, F>, a: F, b: F) -> Result<Self> {
        if n < 3 {
            return Err(DivaError::validation(format!(
                "propensity model needs at least 3 instances (ln N > 1), got {n}"
            )));
        }
        Ok(PropensityModel { a, b, n, priors })
    }

    /// Prior of each gold-vocabulary label: fraction of songs carrying it.
    pub fn from_corpus(corpus: &Corpus, a: F, b: F) -> Result<Self> {
        let n = corpus.n_songs();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for s in corpus.songs() {
            for g in s.gold_labels() {
                *counts.entry(g.clone()).or_insert(0) += 1;
            }
        }
        let priors = counts
            .into_iter()
            .map(|(l, c)| (l, F::from_count(c) / F::from_count(n.max(1))))
            .collect();
        Self::new(n, priors, a, b)
    }

    pub fn get(&self, label: &str) -> Option<F> {
        self.priors.get(label).map(|&p| propensity(self.n, p, self.a, self.b))
    }
}

fn weights_for<F: Real>(reference: &LabelSet, propensities: &dyn Fn(&str) -> Option<F>) -> Result<BTreeMap<String, F>> {
    reference
        .iter()
        .map(|l| {
            let p = propensities(l).ok_or_else(|| DivaError::Metric(format!("no propensity for label `{l}`")))?;
            if !(p > F::zero()) {
                return Err(DivaError::Metric(format!("non-positive propensity for label `{l}`")));
            }
            Ok((l.clone(), F::one() / p))
        })
        .collect()
}

fn sorted_desc<F: Real>(weights: &BTreeMap<String, F>) -> Vec<F> {
    let mut w: Vec<F> = weights.values().copied().collect();
    w.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    w
}

/// Normalized propensity-scored precision. Hits count `1/p`; the normalizer
/// is the best total a prediction list of the same length could reach on
/// this reference, with slots beyond `|ref|` valued at the unit weight of a
/// label with propensity 1. With all propensities 1 this is precision.
pub fn psp<F: Real>(pred_ranked: &[String], reference: &LabelSet, propensities: &dyn Fn(&str) -> Option<F>) -> Result<F> {
    check_unique(pred_ranked)?;
    if pred_ranked.is_empty() || reference.is_empty() {
        return Ok(F::zero());
    }
    let w = weights_for(reference, propensities)?;
    let gained: F = pred_ranked.iter().filter_map(|l| w.get(l)).copied().sum();
    let best = sorted_desc(&w);
    let k = pred_ranked.len();
    let padding = k.saturating_sub(best.len());
    let norm: F = best.into_iter().take(k).sum::<F>() + F::from_count(padding);
    Ok(gained / norm)
}

/// Normalized propensity-scored nDCG; the ideal ranking places the
/// `min(|pred|, |ref|)` highest-weight reference labels first.
pub fn psndcg<F: Real>(pred_ranked: &[String], reference: &LabelSet, propensities: &dyn Fn(&str) -> Option<F>) -> Result<F> {
    check_unique(pred_ranked)?;
    if pred_ranked.is_empty() || reference.is_empty() {
        return Ok(F::zero());
    }
    let w = weights_for(reference, propensities)?;
    let dcg: F = pred_ranked
        .iter()
        .enumerate()
        .filter_map(|(r, l)| w.get(l).map(|&x| x * discount::<F>(r)))
        .sum();
    let ideal: F = sorted_desc(&w)
        .into_iter()
        .take(pred_ranked.len())
        .enumerate()
        .map(|(r, x)| x * discount::<F>(r))
        .sum();
    Ok(dcg / ideal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftScores<F> {
    pub precision: F,
    pub recall: F,
    pub f1: F,
}

fn mean_best_match<F: Real>(from: &[&[F]], to: &[&[F]]) -> Result<F> {
    if from.is_empty() || to.is_empty() {
        return Ok(F::zero());
    }
    let mut total = F::zero();
    for u in from {
        let mut best = F::zero();
        for v in to {
            best = best.max(cosine(u, v)?);
        }
        total = total + best;
    }
    Ok(total / F::from_count(from.len()))
}

/// Soft precision/recall: mean over one side of the best cosine to the
/// other side, negative similarities floored at 0.
pub fn soft_scores<F: Real>(pred: &LabelSet, reference: &LabelSet, embeddings: &EmbeddingTable<F>) -> Result<SoftScores<F>> {
    let lookup = |set: &LabelSet| -> Result<Vec<&[F]>> {
        set.iter()
            .map(|l| embeddings.get(l).ok_or_else(|| DivaError::Metric(format!("label `{l}` has no embedding"))))
            .collect()
    };
    let p = lookup(pred)?;
    let r = lookup(reference)?;
    if r.is_empty() {
        return Ok(SoftScores {
            precision: F::zero(),
            recall: F::zero(),
            f1: F::zero(),
        });
    }
    let precision = mean_best_match(&p, &r)?;
    let recall = mean_best_match(&r, &p)?;
    Ok(SoftScores {
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

/// Jaccard similarity of the prediction with the complete label set.
pub fn coverage<F: Real>(pred: &LabelSet, complete: &LabelSet) -> Result<F> {
    if complete.is_empty() {
        return Err(DivaError::Metric("coverage needs a nonempty complete label set".into()));
    }
    let inter = pred.intersection(complete).count();
    let union = pred.union(complete).count();
    Ok(F::from_count(inter) / F::from_count(union))
}

/// Mean coverage over songs.
pub fn corpus_coverage<F: Real>(pairs: &[(&LabelSet, &LabelSet)]) -> Result<F> {
    if pairs.is_empty() {
        return Ok(F::zero());
    }
    let mut total = F::zero();
    for (p, c) in pairs {
        total = total + coverage::<F>(p, c)?;
    }
    Ok(total / F::from_count(pairs.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSet {
    /// Reference = gold labels.
    Gold,
    /// Reference = complete label sets; propensity metrics not applicable.
    Complete,
}

impl std::str::FromStr for TestSet {
    type Err = DivaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gold" => Ok(TestSet::Gold),
            "complete" => Ok(TestSet::Complete),
            other => Err(DivaError::validation(format!("unknown test set `{other}`"))),
        }
    }
}

/// Metric values; `None` marks a metric that does not apply (serialized as null).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub ndcg: Option<f64>,
    pub psp: Option<f64>,
    pub psndcg: Option<f64>,
    pub soft_precision: Option<f64>,
    pub soft_recall: Option<f64>,
    pub soft_f1: Option<f64>,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongMetrics {
    pub id: String,
    #[serde(flatten)]
    pub values: MetricValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub test_set: TestSet,
    pub n_songs: usize,
    #[serde(flatten)]
    pub values: MetricValues,
    pub conventions: Vec<String>,
    #[serde(skip)]
    pub per_song: Vec<SongMetrics>,
}

fn mean(xs: &[Option<f64>]) -> Option<f64> {
    let vals: Vec<f64> = xs.iter().flatten().copied().collect();
    if vals.is_empty() || vals.len() != xs.len() {
        return None;
    }
    Some(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Scores ranked predictions (song id → labels, best first) against the
/// chosen reference. Only songs present in `predictions` are evaluated.
pub fn evaluate<F: Real>(
    predictions: &BTreeMap<String, Vec<String>>,
    corpus: &Corpus,
    test_set: TestSet,
    embeddings: Option<&EmbeddingTable<F>>,
) -> Result<MetricsReport> {
    let unknown: Vec<&String> = predictions.keys().filter(|id| corpus.song(id).is_none()).collect();
    if !unknown.is_empty() {
        return Err(DivaError::validation(format!("prediction ids not in corpus: {unknown:?}")));
    }
    let has_complete = predictions.keys().all(|id| corpus.song(id).and_then(|s| s.complete_labels()).is_some());
    if test_set == TestSet::Complete && !has_complete {
        return Err(DivaError::validation("--test-set complete requires complete labels for every evaluated song"));
    }
    let propensities = match test_set {
        TestSet::Gold => Some(PropensityModel::<F>::from_corpus(corpus, F::lit(DEFAULT_PROPENSITY_A), F::lit(DEFAULT_PROPENSITY_B))?),
        TestSet::Complete => None,
    };
    let lookup = |l: &str| propensities.as_ref().and_then(|p| p.get(l));

    let mut per_song = Vec::with_capacity(predictions.len());
    for (id, ranked) in predictions {
        let song = corpus.song(id).expect("checked above");
        let pred: LabelSet = ranked.iter().cloned().collect();
        if pred.len() != ranked.len() {
            return Err(DivaError::validation(format!("song `{id}`: duplicate predicted labels")));
        }
        let reference = match test_set {
            TestSet::Gold => song.gold_labels(),
            TestSet::Complete => song.complete_labels().expect("checked above"),
        };
        let prf = prf1::<F>(&pred, reference);
        let mut v = MetricValues {
            precision: Some(prf.precision.as_f64()),
            recall: Some(prf.recall.as_f64()),
            f1: Some(prf.f1.as_f64()),
            ndcg: Some(ndcg::<F>(ranked, reference)?.as_f64()),
            ..MetricValues::default()
        };
        if propensities.is_some() {
            v.psp = Some(psp::<F>(ranked, reference, &lookup)?.as_f64());
            v.psndcg = Some(psndcg::<F>(ranked, reference, &lookup)?.as_f64());
        }
        if let Some(table) = embeddings {
            let s = soft_scores(&pred, reference, table)?;
            v.soft_precision = Some(s.precision.as_f64());
            v.soft_recall = Some(s.recall.as_f64());
            v.soft_f1 = Some(s.f1.as_f64());
        }
        if let Some(complete) = song.complete_labels() {
            v.coverage = Some(coverage::<F>(&pred, complete)?.as_f64());
        }
        per_song.push(SongMetrics { id: id.clone(), values: v });
    }

    let col = |f: fn(&MetricValues) -> Option<f64>| mean(&per_song.iter().map(|s| f(&s.values)).collect::<Vec<_>>());
    let precision = col(|v| v.precision);
    let recall = col(|v| v.recall);
    let soft_precision = col(|v| v.soft_precision);
    let soft_recall = col(|v| v.soft_recall);
    let combine = |p: Option<f64>, r: Option<f64>| match (p, r) {
        (Some(p), Some(r)) => Some(harmonic(p, r)),
        _ => None,
    };
    let values = MetricValues {
        precision,
        recall,
        f1: combine(precision, recall),
        ndcg: col(|v| v.ndcg),
        psp: col(|v| v.psp),
        psndcg: col(|v| v.psndcg),
        soft_precision,
        soft_recall,
        soft_f1: combine(soft_precision, soft_recall),
        coverage: col(|v| v.coverage),
    };
    let mut conventions = vec![
        "empty prediction or reference sets score 0".to_string(),
        "corpus-level f1/soft_f1 are harmonic means of averaged precision and recall".to_string(),
        "negative cosine similarities are floored at 0 in soft matching".to_string(),
        "psp normalizer: best achievable with the same prediction count, extra slots at unit weight".to_string(),
        format!("propensity a={DEFAULT_PROPENSITY_A}, b={DEFAULT_PROPENSITY_B}, natural logarithm"),
    ];
    if test_set == TestSet::Complete {
        conventions.push("psp/psndcg not applicable against complete label sets".into());
    }
    if embeddings.is_none() {
        conventions.push("soft metrics not applicable without embeddings".into());
    }
    if !predictions.keys().any(|id| corpus.song(id).and_then(|s| s.complete_labels()).is_some()) {
        conventions.push("coverage not applicable without complete labels".into());
    }
    Ok(MetricsReport {
        test_set,
        n_songs: per_song.len(),
        values,
        conventions,
        per_song,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(words: &[&str]) -> LabelSet {
        words.iter().map(|s| s.to_string()).collect()
    }

    fn list(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn prf_examples() {
        let p = prf1::<f64>(&set(&["a", "b"]), &set(&["a", "b"]));
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = prf1::<f64>(&set(&["a"]), &set(&["b"]));
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        let p = prf1::<f64>(&set(&["a", "b"]), &set(&["b", "c", "d"]));
        assert_eq!(p.precision, 0.5);
        assert!((p.recall - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.f1 - 0.4).abs() < 1e-15);
        let p = prf1::<f64>(&set(&[]), &set(&[]));
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg::<f64>(&list(&["g"]), &set(&["g"])).unwrap(), 1.0);
        assert_eq!(ndcg::<f64>(&list(&["x", "y"]), &set(&["g"])).unwrap(), 0.0);
        let v = ndcg::<f64>(&list(&["x", "g"]), &set(&["g"])).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((v - 0.630_929_753_571_457_4).abs() < 1e-12);
        assert!(ndcg::<f64>(&list(&["g", "g"]), &set(&["g"])).is_err());
        assert_eq!(ndcg::<f64>(&list(&["g"]), &set(&[])).unwrap(), 0.0);
    }

    #[test]
    fn propensity_examples() {
        // a = 0 collapses both exponent terms to 1
        for (n, prior) in [(3usize, 0.2f64), (100, 0.0), (5000, 0.9)] {
            let p = propensity(n, prior, 0.0, 1.5);
            assert!((p - 1.0 / (1.0 + ((n as f64).ln() - 1.0))).abs() < 1e-15);
        }
        let rare = propensity(100, 0.01f64, 0.55, 1.5);
        let common = propensity(100, 0.5f64, 0.55, 1.5);
        assert!(rare < common);
        assert!(common > 0.0 && common <= 1.0);
        assert!(propensity(100, 0.0f64, 0.55, 1.5).is_finite());
    }

    #[test]
    fn psp_examples() {
        let unit = |_: &str| Some(1.0f64);
        let r = set(&["a", "b", "c"]);
        assert_eq!(psp(&list(&["a", "x"]), &r, &unit).unwrap(), 0.5);
        // more predictions than references: still precision
        assert_eq!(psp(&list(&["a", "x", "y", "z"]), &set(&["a"]), &unit).unwrap(), 0.25);

        let props = |l: &str| match l {
            "rare" => Some(0.5f64),
            "common" => Some(1.0),
            _ => None,
        };
        let r = set(&["rare", "common"]);
        assert_eq!(psp(&list(&["common"]), &r, &props).unwrap(), 0.5);
        assert_eq!(psp(&list(&["rare"]), &r, &props).unwrap(), 1.0);
        assert!(matches!(psp(&list(&["x"]), &set(&["unknown"]), &props), Err(DivaError::Metric(_))));
    }

    #[test]
    fn psndcg_reduces_to_ndcg_under_unit_propensities() {
        let unit = |_: &str| Some(1.0f64);
        let cases = [(list(&["x", "g", "h"]), set(&["g", "h"])), (list(&["g"]), set(&["g", "k"])), (list(&["a", "b", "c", "d"]), set(&["d"]))];
        for (p, r) in cases {
            assert!((psndcg(&p, &r, &unit).unwrap() - ndcg::<f64>(&p, &r).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_examples() {
        let mut t = EmbeddingTable::<f64>::new(2).unwrap();
        // cos(u, v) = 0.8, cos(u, w) = 0.3
        let angle = |c: f64| vec![c, (1.0 - c * c).sqrt()];
        t.insert("u".into(), vec![1.0, 0.0]).unwrap();
        t.insert("v".into(), angle(0.8)).unwrap();
        t.insert("w".into(), vec![0.3, -(1.0 - 0.09f64).sqrt()]).unwrap();
        t.insert("o".into(), vec![0.0, 1.0]).unwrap();
        t.insert("neg".into(), vec![-1.0, 0.0]).unwrap();

        let s = soft_scores(&set(&["u", "v"]), &set(&["u", "v"]), &t).unwrap();
        assert!((s.precision - 1.0).abs() < 1e-12 && (s.recall - 1.0).abs() < 1e-12 && (s.f1 - 1.0).abs() < 1e-12);

        assert_eq!(soft_scores(&set(&["o"]), &set(&["u"]), &t).unwrap().precision, 0.0);
        assert_eq!(soft_scores(&set(&["neg"]), &set(&["u"]), &t).unwrap().precision, 0.0);

        let s = soft_scores(&set(&["u"]), &set(&["v", "w"]), &t).unwrap();
        assert!((s.precision - 0.8).abs() < 1e-12);
        assert!((s.recall - 0.55).abs() < 1e-12);
        assert!((s.f1 - 2.0 * 0.8 * 0.55 / 1.35).abs() < 1e-12);
        assert!((s.f1 - 0.651_851_851_851_851_9).abs() < 1e-12);

        let e = soft_scores(&set(&[]), &set(&["u"]), &t).unwrap();
        assert_eq!((e.precision, e.recall), (0.0, 0.0));
        assert!(matches!(soft_scores(&set(&["zzz"]), &set(&["u"]), &t), Err(DivaError::Metric(m)) if m.contains("zzz")));
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage::<f64>(&set(&["a", "b"]), &set(&["a", "b"])).unwrap(), 1.0);
        assert_eq!(coverage::<f64>(&set(&["x"]), &set(&["a", "b"])).unwrap(), 0.0);
        assert_eq!(coverage::<f64>(&set(&["a"]), &set(&["a", "b", "c"])).unwrap(), 1.0 / 3.0);
        assert!(coverage::<f64>(&set(&["a"]), &set(&[])).is_err());
    }
}
