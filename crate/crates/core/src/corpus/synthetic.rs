//! Deterministic synthetic corpora with planted complete label sets.
//!
//! The world has `n_topics` topics, each owning an equal share of
//! `vocab_size` label words ranked by a Zipf popularity. A song picks one
//! topic, draws its complete labels from that topic by popularity, and its
//! gold labels as a popularity-weighted subset of those, so rarely used
//! labels tend to stay outside the gold vocabulary. Comments mix the
//! complete labels with noise words (Zipf over a separate noise
//! vocabulary), occasional label words of other topics and a few
//! stopwords. Every complete label is planted at
//! least once.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Corpus, Song};
use crate::embedding::EmbeddingTable;
use crate::error::{DivaError, Result};
use crate::num::{norm, Real};
use crate::rng::stream;

const STOPWORDS: &[&str] = &["a", "and", "i", "is", "it", "of", "the", "this", "to", "we"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_songs: usize,
    /// Number of distinct label words.
    pub vocab_size: usize,
    pub noise_vocab_size: usize,
    pub labels_per_song_gold: usize,
    pub labels_per_song_complete: usize,
    pub comments_per_song: usize,
    pub words_per_comment: usize,
    /// Fraction of comment tokens drawn from the noise vocabulary.
    pub noise_token_ratio: f64,
    /// Fraction of comment tokens that are label words of other topics
    /// (mentioned, but not valid for the song).
    pub distractor_ratio: f64,
    pub n_topics: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_songs: 200,
            vocab_size: 80,
            noise_vocab_size: 30,
            labels_per_song_gold: 2,
            labels_per_song_complete: 6,
            comments_per_song: 12,
            words_per_comment: 8,
            noise_token_ratio: 0.6,
            distractor_ratio: 0.1,
            n_topics: 10,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_songs", self.n_songs),
            ("vocab_size", self.vocab_size),
            ("noise_vocab_size", self.noise_vocab_size),
            ("labels_per_song_gold", self.labels_per_song_gold),
            ("labels_per_song_complete", self.labels_per_song_complete),
            ("comments_per_song", self.comments_per_song),
            ("words_per_comment", self.words_per_comment),
            ("n_topics", self.n_topics),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(DivaError::validation(format!("synthetic config: {name} must be positive")));
        }
        if self.labels_per_song_gold > self.labels_per_song_complete {
            return Err(DivaError::validation(
                "synthetic config: labels_per_song_gold exceeds labels_per_song_complete",
            ));
        }
        if self.vocab_size / self.n_topics < self.labels_per_song_complete {
            return Err(DivaError::validation(format!(
                "synthetic config: {} label words per topic cannot hold {} complete labels",
                self.vocab_size / self.n_topics,
                self.labels_per_song_complete
            )));
        }
        if self.comments_per_song * self.words_per_comment < self.labels_per_song_complete {
            return Err(DivaError::validation(
                "synthetic config: comments too short to plant every complete label",
            ));
        }
        if !(0.0..1.0).contains(&self.noise_token_ratio) {
            return Err(DivaError::validation("synthetic config: noise_token_ratio must be in [0, 1)"));
        }
        if !(self.distractor_ratio >= 0.0 && self.noise_token_ratio + self.distractor_ratio < 1.0) {
            return Err(DivaError::validation(
                "synthetic config: distractor_ratio must be non-negative and leave room for label tokens",
            ));
        }
        if self.distractor_ratio > 0.0 && self.n_topics < 2 {
            return Err(DivaError::validation("synthetic config: distractors need at least two topics"));
        }
        Ok(())
    }

    fn words_per_topic(&self) -> usize {
        self.vocab_size / self.n_topics
    }
}

/// A generated corpus plus the vocabulary structure behind it.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: SyntheticConfig,
    pub corpus: Corpus,
    /// `topics[t]` lists topic `t`'s label words, most popular first.
    pub topics: Vec<Vec<String>>,
    pub noise_words: Vec<String>,
}

fn label_word(topic: usize, rank: usize) -> String {
    format!("l{topic}x{rank}")
}

fn noise_word(rank: usize) -> String {
    format!("n{rank}")
}

fn zipf(n: usize) -> Vec<f64> {
    (0..n).map(|r| 1.0 / (r as f64 + 1.0)).collect()
}

fn weighted_subset<R: Rng>(items: &[String], weights: &[f64], k: usize, rng: &mut R) -> Vec<String> {
    let pairs: Vec<(&String, f64)> = items.iter().zip(weights.iter().copied()).collect();
    pairs
        .choose_multiple_weighted(rng, k, |p| p.1)
        .expect("positive weights")
        .map(|p| p.0.clone())
        .collect()
}

impl SyntheticWorld {
    pub fn generate(config: &SyntheticConfig) -> Result<Self> {
        config.validate()?;
        let per_topic = config.words_per_topic();
        let topics: Vec<Vec<String>> = (0..config.n_topics)
            .map(|t| (0..per_topic).map(|r| label_word(t, r)).collect())
            .collect();
        let noise_words: Vec<String> = (0..config.noise_vocab_size).map(noise_word).collect();
        let label_pop = zipf(per_topic);
        let noise_pop = zipf(noise_words.len());
        let noise_total: f64 = noise_pop.iter().sum();
        let noise_cdf: Vec<f64> = noise_pop
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w / noise_total;
                Some(*acc)
            })
            .collect();

        let stopwords: BTreeSet<String> = STOPWORDS.iter().map(|s| s.to_string()).collect();
        let mut rng = stream(config.seed, "synthetic/songs");
        let mut songs = Vec::with_capacity(config.n_songs);
        for i in 0..config.n_songs {
            let topic = rng.gen_range(0..config.n_topics);
            let complete = weighted_subset(&topics[topic], &label_pop, config.labels_per_song_complete, &mut rng);
            let complete_pop: Vec<f64> = complete
                .iter()
                .map(|w| {
                    let r = topics[topic].iter().position(|x| x == w).expect("topic word");
                    label_pop[r]
                })
                .collect();
            let gold = weighted_subset(&complete, &complete_pop, config.labels_per_song_gold, &mut rng);

            let n_tokens = config.comments_per_song * config.words_per_comment;
            let mut tokens: Vec<String> = Vec::with_capacity(n_tokens);
            tokens.extend(complete.iter().cloned());
            while tokens.len() < n_tokens {
                let u: f64 = rng.gen();
                if u < config.noise_token_ratio {
                    let u: f64 = rng.gen();
                    let r = noise_cdf.partition_point(|&c| c < u).min(noise_words.len() - 1);
                    tokens.push(noise_words[r].clone());
                } else if u < config.noise_token_ratio + config.distractor_ratio {
                    let other = (topic + rng.gen_range(1..config.n_topics)) % config.n_topics;
                    tokens.push(weighted_subset(&topics[other], &label_pop, 1, &mut rng).remove(0));
                } else {
                    tokens.push(complete.choose(&mut rng).expect("nonempty").clone());
                }
            }
            tokens.shuffle(&mut rng);
            let comments: Vec<String> = tokens
                .chunks(config.words_per_comment)
                .map(|chunk| {
                    let mut words: Vec<&str> = Vec::with_capacity(chunk.len() * 2);
                    for w in chunk {
                        if rng.gen::<f64>() < 0.2 {
                            words.push(STOPWORDS[rng.gen_range(0..STOPWORDS.len())]);
                        }
                        words.push(w);
                    }
                    words.join(" ")
                })
                .collect();
            songs.push(Song::new(format!("song{i:05}"), comments, gold, Some(complete), &stopwords)?);
        }
        let corpus = Corpus::new(songs, stopwords)?;
        Ok(SyntheticWorld {
            config: config.clone(),
            corpus,
            topics,
            noise_words,
        })
    }

    /// Unit-norm vectors for every label and noise word. A label word sits
    /// close to its topic's direction, nudged toward a shared "label"
    /// direction; noise words point anywhere.
    pub fn embeddings<F: Real>(&self, dim: usize, seed: u64) -> Result<EmbeddingTable<F>> {
        if dim == 0 {
            return Err(DivaError::validation("embedding dimension must be positive"));
        }
        let mut rng = stream(seed, "synthetic/embeddings");
        let random_unit = |rng: &mut crate::rng::DivaRng| -> Vec<f64> {
            loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&v);
                if n > 1e-9 {
                    return v.into_iter().map(|x| x / n).collect();
                }
            }
        };
        let label_axis = random_unit(&mut rng);
        let centers: Vec<Vec<f64>> = (0..self.topics.len()).map(|_| random_unit(&mut rng)).collect();
        let mut table = EmbeddingTable::new(dim)?;
        let push = |table: &mut EmbeddingTable<F>, word: &str, v: Vec<f64>| -> Result<()> {
            let n = norm(&v);
            table.insert(word.to_string(), v.into_iter().map(|x| F::lit(x / n)).collect())
        };
        for (t, words) in self.topics.iter().enumerate() {
            for w in words {
                let e = random_unit(&mut rng);
                let v = (0..dim)
                    .map(|j| 0.3 * label_axis[j] + 0.9 * centers[t][j] + 0.3 * e[j])
                    .collect();
                push(&mut table, w, v)?;
            }
        }
        for w in &self.noise_words {
            let e = random_unit(&mut rng);
            push(&mut table, w, e)?;
        }
        Ok(table)
    }
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Corpus> {
    SyntheticWorld::generate(config).map(|w| w.corpus)
}
