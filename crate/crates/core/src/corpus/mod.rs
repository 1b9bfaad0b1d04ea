//! Songs, their tokenized comments, label sets, and candidate construction.

mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{DivaError, Result};

pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticWorld};

pub type LabelSet = BTreeSet<String>;

/// Split on anything that is not alphanumeric, lowercase, drop stopwords.
/// Order and duplicates are preserved.
pub fn tokenize(text: &str, stopwords: &BTreeSet<String>) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !stopwords.contains(t))
        .collect()
}

fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Song {
    id: String,
    comments: Vec<String>,
    tokens: Vec<String>,
    counts: BTreeMap<String, usize>,
    gold_labels: LabelSet,
    complete_labels: Option<LabelSet>,
}

impl Song {
    /// Tokenizes the comments and checks the nesting of the label sets:
    /// gold must sit inside complete, and every complete label that is not
    /// gold must occur in the comments.
    pub fn new(
        id: impl Into<String>,
        comments: Vec<String>,
        gold_labels: impl IntoIterator<Item = String>,
        complete_labels: Option<Vec<String>>,
        stopwords: &BTreeSet<String>,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(DivaError::validation("song id must not be empty"));
        }
        let tokens: Vec<String> = comments.iter().flat_map(|c| tokenize(c, stopwords)).collect();
        let mut counts = BTreeMap::new();
        for t in &tokens {
            *counts.entry(t.clone()).or_insert(0usize) += 1;
        }
        let gold_labels: LabelSet = gold_labels
            .into_iter()
            .map(|l| normalize_label(&l))
            .filter(|l| !l.is_empty())
            .collect();
        let complete_labels: Option<LabelSet> = complete_labels.map(|c| {
            c.iter()
                .map(|l| normalize_label(l))
                .filter(|l| !l.is_empty())
                .collect()
        });
        if let Some(complete) = &complete_labels {
            if let Some(g) = gold_labels.iter().find(|g| !complete.contains(*g)) {
                return Err(DivaError::validation(format!(
                    "song `{id}`: gold label `{g}` missing from complete labels"
                )));
            }
            if let Some(c) = complete
                .iter()
                .find(|c| !gold_labels.contains(*c) && !counts.contains_key(*c))
            {
                return Err(DivaError::validation(format!(
                    "song `{id}`: complete label `{c}` does not occur in the comments"
                )));
            }
        }
        Ok(Song {
            id,
            comments,
            tokens,
            counts,
            gold_labels,
            complete_labels,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn comments(&self) -> &[String] {
        &self.comments
    }

    /// Tokens in comment order, duplicates kept.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn distinct_tokens(&self) -> impl Iterator<Item = &String> {
        self.counts.keys()
    }

    pub fn count(&self, token: &str) -> usize {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn contains_token(&self, token: &str) -> bool {
        self.counts.contains_key(token)
    }

    pub fn gold_labels(&self) -> &LabelSet {
        &self.gold_labels
    }

    pub fn complete_labels(&self) -> Option<&LabelSet> {
        self.complete_labels.as_ref()
    }

    /// Candidates used for training pairs: distinct tokens plus gold labels.
    pub fn training_candidates(&self) -> LabelSet {
        self.counts
            .keys()
            .chain(self.gold_labels.iter())
            .cloned()
            .collect()
    }

    /// Candidates scored at inference: the gold vocabulary and the distinct
    /// tokens, minus this song's own gold labels.
    pub fn inference_candidates(&self, gold_vocab: &LabelSet) -> LabelSet {
        gold_vocab
            .iter()
            .chain(self.counts.keys())
            .filter(|l| !self.gold_labels.contains(*l))
            .cloned()
            .collect()
    }

    fn to_record(&self) -> CorpusRecord {
        CorpusRecord {
            id: self.id.clone(),
            comments: self.comments.clone(),
            gold_labels: self.gold_labels.iter().cloned().collect(),
            complete_labels: self
                .complete_labels
                .as_ref()
                .map(|c| c.iter().cloned().collect()),
        }
    }
}

pub fn training_candidates(song: &Song) -> LabelSet {
    song.training_candidates()
}

pub fn inference_candidates(song: &Song, gold_vocab: &LabelSet) -> LabelSet {
    song.inference_candidates(gold_vocab)
}

/// One line of the JSON Lines corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub comments: Vec<String>,
    pub gold_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complete_labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    songs: Vec<Song>,
    gold_vocab: LabelSet,
    stopwords: BTreeSet<String>,
    doc_freq: HashMap<String, usize>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(songs: Vec<Song>, stopwords: BTreeSet<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(songs.len());
        for (i, s) in songs.iter().enumerate() {
            if index.insert(s.id.clone(), i).is_some() {
                return Err(DivaError::validation(format!("duplicate song id `{}`", s.id)));
            }
        }
        let gold_vocab: LabelSet = songs
            .iter()
            .flat_map(|s| s.gold_labels.iter().cloned())
            .collect();
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for s in &songs {
            for t in s.counts.keys() {
                *doc_freq.entry(t.clone()).or_insert(0) += 1;
            }
        }
        Ok(Corpus {
            songs,
            gold_vocab,
            stopwords,
            doc_freq,
            index,
        })
    }

    pub fn songs(&self) -> &[Song] {
        &self.songs
    }

    pub fn n_songs(&self) -> usize {
        self.songs.len()
    }

    pub fn gold_vocab(&self) -> &LabelSet {
        &self.gold_vocab
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn song(&self, id: &str) -> Option<&Song> {
        self.index.get(id).map(|&i| &self.songs[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Number of songs whose tokens contain `token`.
    pub fn document_frequency(&self, token: &str) -> usize {
        self.doc_freq.get(token).copied().unwrap_or(0)
    }

    /// Number of songs carrying `label` among their gold labels.
    pub fn gold_frequency(&self, label: &str) -> usize {
        self.songs.iter().filter(|s| s.gold_labels.contains(label)).count()
    }

    pub fn has_complete_labels(&self) -> bool {
        !self.songs.is_empty() && self.songs.iter().all(|s| s.complete_labels.is_some())
    }

    /// Parse JSON Lines records. `source` names the input in error messages.
    pub fn from_jsonl<R: BufRead>(reader: R, stopwords: BTreeSet<String>, source: &str) -> Result<Self> {
        let mut songs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| DivaError::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| DivaError::Parse {
                path: source.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            let song = Song::new(rec.id, rec.comments, rec.gold_labels, rec.complete_labels, &stopwords)
                .map_err(|e| match e {
                    DivaError::Validation(m) => DivaError::Validation(format!("{source}:{}: {m}", i + 1)),
                    other => other,
                })?;
            let orphan: Vec<&String> = song
                .gold_labels
                .iter()
                .filter(|g| !song.contains_token(g))
                .collect();
            if !orphan.is_empty() && orphan.len() == song.gold_labels.len() {
                info!("song `{}`: no gold label occurs in its comments ({orphan:?})", song.id);
            }
            songs.push(song);
        }
        Corpus::new(songs, stopwords)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.songs {
            serde_json::to_writer(&mut w, &s.to_record())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| DivaError::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_jsonl(&mut w).map_err(|e| DivaError::io(path, e))?;
        w.flush().map_err(|e| DivaError::io(path, e))
    }
}

/// One token per line; blank lines ignored, entries lowercased.
pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let f = File::open(path).map_err(|e| DivaError::io(path, e))?;
    let mut out = BTreeSet::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| DivaError::io(path, e))?;
        let t = line.trim();
        if !t.is_empty() {
            out.insert(t.to_lowercase());
        }
    }
    Ok(out)
}

pub fn save_stopwords(stopwords: &BTreeSet<String>, path: &Path) -> Result<()> {
    let mut body = String::new();
    for s in stopwords {
        body.push_str(s);
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| DivaError::io(path, e))
}

pub fn load_corpus(path: &Path, stopword_path: Option<&Path>) -> Result<Corpus> {
    let stopwords = match stopword_path {
        Some(p) => load_stopwords(p)?,
        None => BTreeSet::new(),
    };
    let f = File::open(path).map_err(|e| DivaError::io(path, e))?;
    let corpus = Corpus::from_jsonl(BufReader::new(f), stopwords, &path.display().to_string())?;
    if corpus.n_songs() == 0 {
        warn!("{}: corpus is empty", path.display());
    }
    Ok(corpus)
}
