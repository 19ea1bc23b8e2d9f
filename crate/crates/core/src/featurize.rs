//! Segment vectors: per-category aggregation of the segments retained after
//! confidence filtering.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ImageSegments, Vocabulary};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Presence indicator per category.
    Binary,
    /// Number of instances per category.
    Count,
    /// Largest instance area per category.
    AreaMax,
    /// Summed instance area per category.
    AreaSum,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::Binary,
        FeatureKind::Count,
        FeatureKind::AreaMax,
        FeatureKind::AreaSum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Binary => "binary",
            FeatureKind::Count => "count",
            FeatureKind::AreaMax => "area_max",
            FeatureKind::AreaSum => "area_sum",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown feature kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturizeConfig {
    pub kind: FeatureKind,
    /// Segments scoring below this are dropped; equality is kept.
    pub score_threshold: f64,
}

impl FeaturizeConfig {
    pub fn new(kind: FeatureKind) -> Self {
        FeaturizeConfig {
            kind,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.score_threshold = threshold;
        self
    }

    pub fn keeps(&self, score: f64) -> bool {
        score >= self.score_threshold
    }
}

/// Records how a model's input columns were produced, so that prediction
/// can rebuild the same features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub vocabulary: String,
    pub kind: FeatureKind,
    pub score_threshold: f64,
}

impl FeatureSpec {
    pub fn new(vocab: &Vocabulary, cfg: &FeaturizeConfig) -> Self {
        FeatureSpec {
            vocabulary: vocab.name().to_string(),
            kind: cfg.kind,
            score_threshold: cfg.score_threshold,
        }
    }

    pub fn config(&self) -> FeaturizeConfig {
        FeaturizeConfig::new(self.kind).with_threshold(self.score_threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub image_id: String,
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

fn aggregate(image: &ImageSegments, cfg: &FeaturizeConfig, vocab: &Vocabulary, out: &mut [f64]) -> Result<()> {
    if image.vocabulary != vocab.name() {
        return Err(Error::VocabularyMismatch {
            expected: vocab.name().to_string(),
            found: image.vocabulary.clone(),
        });
    }
    out.fill(0.0);
    for seg in image.segments.iter().filter(|s| cfg.keeps(s.score)) {
        let c = vocab.index_of(&seg.category).ok_or_else(|| Error::UnknownCategory {
            line: 0,
            category: seg.category.clone(),
            vocabulary: vocab.name().to_string(),
        })?;
        let slot = &mut out[c];
        match cfg.kind {
            FeatureKind::Binary => *slot = 1.0,
            FeatureKind::Count => *slot += 1.0,
            FeatureKind::AreaMax => *slot = slot.max(seg.area),
            FeatureKind::AreaSum => *slot += seg.area,
        }
    }
    debug_assert!(cfg.kind != FeatureKind::Count || out.iter().all(|v| v.fract() == 0.0));
    Ok(())
}

pub fn featurize(image: &ImageSegments, cfg: &FeaturizeConfig, vocab: &Vocabulary) -> Result<FeatureVector> {
    let mut values = vec![0.0; vocab.size()];
    aggregate(image, cfg, vocab, &mut values)?;
    Ok(FeatureVector {
        image_id: image.image_id.clone(),
        kind: cfg.kind,
        values,
    })
}

/// Feature rows with their image and country keys.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub image_ids: Vec<String>,
    pub countries: Vec<String>,
    pub kind: FeatureKind,
    pub columns: Vec<String>,
    pub x: Matrix,
}

pub fn featurize_dataset(images: &[ImageSegments], cfg: &FeaturizeConfig, vocab: &Vocabulary) -> Result<FeatureMatrix> {
    let p = vocab.size();
    let mut x = Matrix::zeros(images.len(), p);
    if p > 0 {
        let data: Vec<Result<Vec<f64>>> = images
            .par_iter()
            .map(|img| {
                let mut row = vec![0.0; p];
                aggregate(img, cfg, vocab, &mut row).map(|_| row)
            })
            .collect();
        for (i, row) in data.into_iter().enumerate() {
            x.row_mut(i).copy_from_slice(&row?);
        }
    } else if let Some(img) = images.iter().find(|i| i.vocabulary != vocab.name()) {
        return Err(Error::VocabularyMismatch {
            expected: vocab.name().to_string(),
            found: img.vocabulary.clone(),
        });
    }
    Ok(FeatureMatrix {
        image_ids: images.iter().map(|i| i.image_id.clone()).collect(),
        countries: images.iter().map(|i| i.country.clone()).collect(),
        kind: cfg.kind,
        columns: vocab.categories().to_vec(),
        x,
    })
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            image_ids: idx.iter().map(|&i| self.image_ids[i].clone()).collect(),
            countries: idx.iter().map(|&i| self.countries[i].clone()).collect(),
            kind: self.kind,
            columns: self.columns.clone(),
            x: self.x.select_rows(idx),
        }
    }

    /// Rows that have a target, in row order, with their targets.
    pub fn labeled(&self, targets: &BTreeMap<String, bool>) -> (FeatureMatrix, Vec<bool>) {
        let idx: Vec<usize> = (0..self.rows())
            .filter(|&i| targets.contains_key(&self.image_ids[i]))
            .collect();
        let y = idx.iter().map(|&i| targets[&self.image_ids[i]]).collect();
        (self.select_rows(&idx), y)
    }

    /// CSV with header `image_id,<cat0>,<cat1>,...`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(self.columns.len() + 1);
        header.push("image_id");
        header.extend(self.columns.iter().map(String::as_str));
        let res = w.write_record(&header).and_then(|_| {
            (0..self.rows()).try_for_each(|i| {
                let mut rec = Vec::with_capacity(self.columns.len() + 1);
                rec.push(self.image_ids[i].clone());
                rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
                w.write_record(&rec)
            })
        });
        res.and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Computation(e.to_string()))
    }
}
