use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoSource {
    Classifier,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoEntry {
    pub source: PseudoSource,
    pub iteration: usize,
    pub score: f64,
}

/// Per-song pseudo-labels with provenance. One entry per (song, label);
/// the first insertion wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelStore {
    songs: BTreeMap<String, BTreeMap<String, PseudoEntry>>,
}

impl PseudoLabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `true` when the pair was not present before. Gold labels are
    /// rejected.
    pub fn insert(&mut self, song_id: &str, gold: &LabelSet, label: &str, entry: PseudoEntry) -> bool {
        if gold.contains(label) {
            return false;
        }
        let song = self.songs.entry(song_id.to_string()).or_default();
        if song.contains_key(label) {
            return false;
        }
        song.insert(label.to_string(), entry);
        true
    }

    pub fn contains(&self, song_id: &str, label: &str) -> bool {
        self.songs.get(song_id).is_some_and(|s| s.contains_key(label))
    }

    pub fn entries(&self, song_id: &str) -> Option<&BTreeMap<String, PseudoEntry>> {
        self.songs.get(song_id)
    }

    pub fn labels(&self, song_id: &str) -> LabelSet {
        self.songs
            .get(song_id)
            .map(|s| s.keys().cloned().collect())
            .unwrap_or_default()
    }

    /// Song id → pseudo-label set, the shape the trainer consumes.
    pub fn label_map(&self) -> BTreeMap<String, LabelSet> {
        self.songs
            .iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|(id, s)| (id.clone(), s.keys().cloned().collect()))
            .collect()
    }

    /// Every distinct label held for any song.
    pub fn all_labels(&self) -> LabelSet {
        self.songs.values().flat_map(|s| s.keys().cloned()).collect()
    }

    pub fn len(&self) -> usize {
        self.songs.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count_by_source(&self, source: PseudoSource) -> usize {
        self.songs
            .values()
            .flat_map(|s| s.values())
            .filter(|e| e.source == source)
            .count()
    }

    /// `true` when every (song, label) of `self` is also in `other`.
    pub fn is_subset_of(&self, other: &PseudoLabelStore) -> bool {
        self.songs
            .iter()
            .all(|(id, s)| s.keys().all(|l| other.contains(id, l)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(source: PseudoSource) -> PseudoEntry {
        PseudoEntry { source, iteration: 1, score: 0.9 }
    }

    #[test]
    fn insert_rules() {
        let gold: LabelSet = ["g".to_string()].into();
        let mut s = PseudoLabelStore::new();
        assert!(s.insert("a", &gold, "x", entry(PseudoSource::Classifier)));
        assert!(!s.insert("a", &gold, "x", entry(PseudoSource::Joint)));
        assert!(!s.insert("a", &gold, "g", entry(PseudoSource::Joint)));
        assert!(s.insert("b", &gold, "x", entry(PseudoSource::Joint)));
        assert_eq!(s.len(), 2);
        assert_eq!(s.count_by_source(PseudoSource::Classifier), 1);
        assert_eq!(s.entries("a").unwrap()["x"].source, PseudoSource::Classifier);
        assert_eq!(s.all_labels().len(), 1);

        let mut bigger = s.clone();
        bigger.insert("a", &gold, "y", entry(PseudoSource::Joint));
        assert!(s.is_subset_of(&bigger));
        assert!(!bigger.is_subset_of(&s));
    }
}
