//! Seeded synthetic segment datasets with a known labeling rule, used by
//! tests, benchmarks and the `synth` CLI command.

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ImageSegments, Label, LabelRecord, SegmentRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_images: usize,
    pub countries: Vec<String>,
    /// Fraction of positives within every country, rounded half up.
    pub positive_rate: f64,
    /// Positives contain at least one retained instance of this category,
    /// negatives contain none.
    pub signal: String,
    /// Present exactly once, identically, on every image.
    pub decoy: Option<String>,
    /// Label-independent clutter.
    pub noise: Vec<String>,
    /// Probability that a label is flipped after generation.
    pub label_noise: f64,
    /// Consecutive UTC days covered by the timestamps.
    pub days: u32,
    pub seed: u64,
}

impl SyntheticConfig {
    /// 500 LVIS images over five countries with about 11% positives, where
    /// `person`-like clutter is irrelevant and `banner` decides the label.
    pub fn protest_like(seed: u64) -> Self {
        SyntheticConfig {
            n_images: 500,
            countries: ["BY", "HK", "RU", "TH", "US"].iter().map(|c| c.to_string()).collect(),
            positive_rate: 0.11,
            signal: "banner".into(),
            decoy: Some("signboard".into()),
            noise: ["person", "flag", "car", "umbrella", "candle"].iter().map(|c| c.to_string()).collect(),
            label_noise: 0.0,
            days: 14,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub images: Vec<ImageSegments>,
    pub labels: Vec<LabelRecord>,
}

pub const SYNTHETIC_CODER: &str = "synth";
const MIN_SIGNAL_SCORE: f64 = 0.3;

fn square(rng: &mut impl Rng, area: f64) -> Vec<[f64; 2]> {
    let side = area.sqrt().min(1.0);
    let x0 = rng.random_range(0.0..=1.0 - side);
    let y0 = rng.random_range(0.0..=1.0 - side);
    vec![[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]]
}

fn segment(rng: &mut impl Rng, category: &str, score: f64) -> SegmentRecord {
    let area = rng.random_range(0.001..0.2);
    let mut s = SegmentRecord::new(category, score, area);
    s.polygon = Some(square(rng, area));
    s
}

pub fn generate(cfg: &SyntheticConfig, vocab: &Vocabulary) -> Result<SyntheticDataset> {
    if cfg.countries.is_empty() {
        return Err(Error::InvalidParams("at least one country is required".into()));
    }
    if !(0.0..=1.0).contains(&cfg.positive_rate) || !(0.0..=1.0).contains(&cfg.label_noise) {
        return Err(Error::InvalidParams("rates must lie in [0, 1]".into()));
    }
    if cfg.days == 0 {
        return Err(Error::InvalidParams("days must be at least 1".into()));
    }
    for c in std::iter::once(&cfg.signal).chain(&cfg.decoy).chain(&cfg.noise) {
        if vocab.index_of(c).is_none() {
            return Err(Error::UnknownCategory {
                line: 0,
                category: c.clone(),
                vocabulary: vocab.name().to_string(),
            });
        }
    }
    if cfg.noise.contains(&cfg.signal) || cfg.decoy.as_ref() == Some(&cfg.signal) {
        return Err(Error::InvalidParams("the signal category cannot also be clutter".into()));
    }

    let mut rng = seed::rng(cfg.seed);
    let nc = cfg.countries.len();
    let mut positive = vec![false; cfg.n_images];
    for c in 0..nc {
        let mut members: Vec<usize> = (c..cfg.n_images).step_by(nc).collect();
        let k = (cfg.positive_rate * members.len() as f64 + 0.5).floor() as usize;
        members.shuffle(&mut rng);
        for &i in &members[..k] {
            positive[i] = true;
        }
    }

    let start = Utc.with_ymd_and_hms(2019, 8, 1, 0, 0, 0).single().expect("valid date");
    let mut images = Vec::with_capacity(cfg.n_images);
    let mut labels = Vec::with_capacity(cfg.n_images);
    for (i, &pos) in positive.iter().enumerate() {
        let id = format!("img{i:05}");
        let mut img = ImageSegments::new(&id, &cfg.countries[i % nc], vocab);
        let secs = rng.random_range(0..i64::from(cfg.days) * 86_400);
        img.timestamp = Some(start + Duration::seconds(secs));
        img.image_uri = Some(format!("images/{id}.jpg"));
        if pos {
            for _ in 0..rng.random_range(1..=4) {
                let score = rng.random_range(MIN_SIGNAL_SCORE..=1.0);
                img.segments.push(segment(&mut rng, &cfg.signal, score));
            }
        } else if rng.random_bool(0.2) {
            // Below the default threshold, so featurization must drop it.
            let score = rng.random_range(0.0..0.09);
            img.segments.push(segment(&mut rng, &cfg.signal, score));
        }
        for n in &cfg.noise {
            for _ in 0..rng.random_range(0..=3) {
                let score = rng.random_range(0.0..=1.0);
                img.segments.push(segment(&mut rng, n, score));
            }
        }
        if let Some(d) = &cfg.decoy {
            let mut s = SegmentRecord::new(d.clone(), 0.9, 0.05);
            s.polygon = Some(vec![[0.0, 0.0], [0.2, 0.0], [0.2, 0.25], [0.0, 0.25]]);
            img.segments.push(s);
        }
        img.segments.shuffle(&mut rng);

        let flip = cfg.label_noise > 0.0 && rng.random_bool(cfg.label_noise);
        let certain = rng.random_bool(0.7);
        let label = match (pos != flip, certain) {
            (true, true) => Label::ProtestHigh,
            (true, false) => Label::ProtestLow,
            (false, false) => Label::NoProtestLow,
            (false, true) => Label::NoProtestHigh,
        };
        labels.push(LabelRecord {
            image_id: id,
            coder_id: SYNTHETIC_CODER.into(),
            round: 1,
            label,
        });
        images.push(img);
    }
    Ok(SyntheticDataset { images, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::binary_targets;
    use crate::featurize::{featurize_dataset, FeatureKind, FeaturizeConfig};

    #[test]
    fn class_balance_and_rule() {
        let vocab = Vocabulary::lvis();
        let ds = generate(&SyntheticConfig::protest_like(7), &vocab).unwrap();
        assert_eq!(ds.images.len(), 500);
        let targets = binary_targets(&ds.labels);
        let pos = targets.values().filter(|&&p| p).count();
        assert_eq!(pos, 55);
        let fm = featurize_dataset(&ds.images, &FeaturizeConfig::new(FeatureKind::Binary), &vocab).unwrap();
        let col = vocab.index_of("banner").unwrap();
        let decoy = vocab.index_of("signboard").unwrap();
        for (r, id) in fm.image_ids.iter().enumerate() {
            assert_eq!(fm.x.get(r, col) == 1.0, targets[id]);
            assert_eq!(fm.x.get(r, decoy), 1.0);
        }
        for img in &ds.images {
            img.validate(&vocab, 0).unwrap();
        }
    }

    #[test]
    fn every_country_has_positives() {
        let ds = generate(&SyntheticConfig::protest_like(1), &Vocabulary::lvis()).unwrap();
        let targets = binary_targets(&ds.labels);
        for c in ["BY", "HK", "RU", "TH", "US"] {
            assert!(ds.images.iter().any(|i| i.country == c && targets[&i.image_id]));
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig::protest_like(3);
        let vocab = Vocabulary::lvis();
        assert_eq!(generate(&cfg, &vocab).unwrap(), generate(&cfg, &vocab).unwrap());
    }

    #[test]
    fn rejects_unknown_category() {
        let mut cfg = SyntheticConfig::protest_like(3);
        cfg.signal = "not_a_category".into();
        assert!(generate(&cfg, &Vocabulary::lvis()).is_err());
        assert!(generate(&SyntheticConfig::protest_like(3), &Vocabulary::coco()).is_err());
    }
}
