//! Matching of freely named objects against detected segment categories.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercased, trimmed, inner whitespace collapsed to `_` so that
/// "Police Cruiser" compares equal to `police_cruiser`.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join("_").to_lowercase()
}

/// Maps a free-text object name to the categories it may stand for
/// (synonyms, subtypes and supertypes).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<String, BTreeSet<String>>", into = "BTreeMap<String, BTreeSet<String>>")]
pub struct SynonymDictionary {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl From<BTreeMap<String, BTreeSet<String>>> for SynonymDictionary {
    fn from(raw: BTreeMap<String, BTreeSet<String>>) -> Self {
        let mut d = SynonymDictionary::default();
        for (name, cats) in raw {
            for c in cats {
                d.insert(&name, &c);
            }
        }
        d
    }
}

impl From<SynonymDictionary> for BTreeMap<String, BTreeSet<String>> {
    fn from(d: SynonymDictionary) -> Self {
        d.entries
    }
}

impl SynonymDictionary {
    /// Dictionary for protest imagery over LVIS category names.
    pub fn bundled() -> Self {
        Self::from_json(include_str!("../../data/object_dictionary.json")).expect("bundled dictionary parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("object dictionary: {e}")))
    }

    pub fn insert(&mut self, name: &str, category: &str) {
        self.entries
            .entry(normalize_name(name))
            .or_default()
            .insert(normalize_name(category));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn categories(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(&normalize_name(name))
    }

    fn lenient(&self, name: &str, category: &str) -> bool {
        strict(name, category) || self.categories(name).is_some_and(|c| c.contains(&normalize_name(category)))
    }
}

fn strict(name: &str, category: &str) -> bool {
    normalize_name(name) == normalize_name(category)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub named: usize,
    pub strict: usize,
    pub lenient: usize,
    /// Names without a lenient match.
    pub unmatched: Vec<String>,
}

impl MatchReport {
    pub fn merge(&mut self, other: &MatchReport) {
        self.named += other.named;
        self.strict += other.strict;
        self.lenient += other.lenient;
        self.unmatched.extend(other.unmatched.iter().cloned());
    }
}

/// Each name claims at most one detection: the first not yet claimed in
/// that pass. Strict and lenient matching are separate passes.
fn greedy(named: &[String], detected: &[String], accept: impl Fn(&str, &str) -> bool) -> Vec<bool> {
    let mut used = vec![false; detected.len()];
    named
        .iter()
        .map(|n| {
            let hit = (0..detected.len()).find(|&j| !used[j] && accept(n, &detected[j]));
            if let Some(j) = hit {
                used[j] = true;
            }
            hit.is_some()
        })
        .collect()
}

pub fn match_objects(named: &[String], detected: &[String], dict: &SynonymDictionary) -> MatchReport {
    let strict_hits = greedy(named, detected, strict);
    let lenient_hits = greedy(named, detected, |n, c| dict.lenient(n, c));
    MatchReport {
        named: named.len(),
        strict: strict_hits.iter().filter(|&&h| h).count(),
        lenient: lenient_hits.iter().filter(|&&h| h).count(),
        unmatched: named
            .iter()
            .zip(&lenient_hits)
            .filter(|(_, &h)| !h)
            .map(|(n, _)| n.clone())
            .collect(),
    }
}
