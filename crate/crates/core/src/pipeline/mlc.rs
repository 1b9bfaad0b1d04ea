//! Fixed-vocabulary multi-label baseline: document vector → affine map →
//! one sigmoid per gold-vocabulary label.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classifier::{bce_loss, DocVectors, TrainConfig};
use crate::corpus::Corpus;
use crate::error::{DivaError, Result};
use crate::num::{dot, sigmoid, Real};
use crate::rng::DivaRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct MlcModel<F> {
    pub labels: Vec<String>,
    pub dim: usize,
    /// Row-major `labels.len() × dim`.
    pub weights: Vec<F>,
    pub biases: Vec<F>,
}

impl<F: Real> MlcModel<F> {
    pub fn zeros(labels: Vec<String>, dim: usize) -> Self {
        let n = labels.len();
        MlcModel {
            labels,
            dim,
            weights: vec![F::zero(); n * dim],
            biases: vec![F::zero(); n],
        }
    }

    pub fn predict(&self, doc: &[F]) -> Result<Vec<F>> {
        if doc.len() != self.dim {
            return Err(DivaError::Shape {
                expected: self.dim,
                actual: doc.len(),
            });
        }
        Ok(self
            .weights
            .chunks(self.dim)
            .zip(&self.biases)
            .map(|(row, &b)| sigmoid(dot(row, doc) + b))
            .collect())
    }

    /// Summed BCE over all songs and labels, mini-batch gradient descent
    /// with songs shuffled each epoch. Returns the mean per-song loss of each epoch.
    pub fn fit(&mut self, corpus: &Corpus, docs: &DocVectors<F>, config: &TrainConfig, rng: &mut DivaRng) -> Result<Vec<f64>> {
        config.validate()?;
        if self.labels.is_empty() {
            return Err(DivaError::Training("empty gold vocabulary".into()));
        }
        let targets: Vec<(usize, Vec<F>)> = corpus
            .songs()
            .iter()
            .enumerate()
            .filter(|(i, _)| docs.get(*i).is_some())
            .map(|(i, s)| {
                let t = self
                    .labels
                    .iter()
                    .map(|l| if s.gold_labels().contains(l) { F::one() } else { F::zero() })
                    .collect();
                (i, t)
            })
            .collect();
        if targets.is_empty() {
            return Err(DivaError::Training("no embeddable songs".into()));
        }
        let lr = F::lit(config.learning_rate);
        let mut order: Vec<usize> = (0..targets.len()).collect();
        let mut losses = Vec::with_capacity(config.epochs);
        for _ in 0..config.epochs {
            order.shuffle(rng);
            let mut epoch = 0.0;
            for batch in order.chunks(config.batch_size) {
                let mut gw = vec![F::zero(); self.weights.len()];
                let mut gb = vec![F::zero(); self.biases.len()];
                for &k in batch {
                    let (pos, ref t) = targets[k];
                    let doc = docs.get(pos).expect("filtered");
                    let p = self.predict(doc)?;
                    for (j, (&pj, &tj)) in p.iter().zip(t).enumerate() {
                        epoch += bce_loss(pj, tj).as_f64();
                        let err = pj - tj;
                        gb[j] = gb[j] + err;
                        for (g, &x) in gw[j * self.dim..(j + 1) * self.dim].iter_mut().zip(doc) {
                            *g = *g + err * x;
                        }
                    }
                }
                for (w, g) in self.weights.iter_mut().zip(gw) {
                    *w = *w - lr * g;
                }
                for (b, g) in self.biases.iter_mut().zip(gb) {
                    *b = *b - lr * g;
                }
            }
            losses.push(epoch / targets.len() as f64);
        }
        Ok(losses)
    }
}
