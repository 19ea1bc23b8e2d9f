//! Stratified train/test split by (country, binary label).

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitItem {
    pub image_id: String,
    pub country: String,
    pub label: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    /// CSV `image_id,subset`, train rows first.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut res = w.write_record(["image_id", "subset"]);
        for (subset, ids) in [("train", &self.train), ("test", &self.test)] {
            for id in ids {
                res = res.and_then(|_| w.write_record([id.as_str(), subset]));
            }
        }
        res.and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Computation(e.to_string()))
    }
}

/// Number of training images for a stratum of `n`: `floor(f * n + 0.5)`.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    ((train_fraction * n as f64 + 0.5).floor() as usize).min(n)
}

/// Each (country, label) stratum is sorted by image id, shuffled by one
/// generator seeded with `seed` (strata visited in sorted order), and its
/// first `train_count` images go to train. Output lists are sorted.
pub fn split_train_test(items: &[SplitItem], train_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidParams(format!(
            "train fraction {train_fraction} outside [0, 1]"
        )));
    }
    let mut strata: BTreeMap<(&str, bool), Vec<&str>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for it in items {
        if !seen.insert(it.image_id.as_str()) {
            return Err(Error::Duplicate {
                line: 0,
                what: "image_id",
                id: it.image_id.clone(),
            });
        }
        strata.entry((&it.country, it.label)).or_default().push(&it.image_id);
    }
    let mut rng = seed::rng(seed);
    let mut split = Split::default();
    for ids in strata.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let n_train = train_count(ids.len(), train_fraction);
        split.train.extend(ids[..n_train].iter().map(|s| s.to_string()));
        split.test.extend(ids[n_train..].iter().map(|s| s.to_string()));
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}
