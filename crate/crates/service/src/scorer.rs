//! The model that scores unlabeled images between annotation rounds.

use std::collections::BTreeMap;

use segclf_core::evaluate::{evaluate_grouped, EvalReport};
use segclf_core::learners::{train, BoostedParams, Hyperparams};
use segclf_core::{featurize_dataset, FeatureKind, FeaturizeConfig, ImageSegments, Result, Vocabulary};

pub struct Scoring {
    /// Positive-class probability for every image of the dataset.
    pub scores: BTreeMap<String, f64>,
    /// Training fit per country, then pooled.
    pub report: Vec<EvalReport>,
}

pub trait Scorer: Send + Sync {
    /// Fits on the images that have a target and scores every image.
    fn fit(&self, images: &[ImageSegments], vocab: &Vocabulary, targets: &BTreeMap<String, bool>) -> Result<Scoring>;
}

/// Gradient-boosted trees on segment features (area sums by default).
#[derive(Debug, Clone)]
pub struct BoostedScorer {
    pub features: FeaturizeConfig,
    pub params: BoostedParams,
}

impl BoostedScorer {
    pub fn new(seed: u64) -> Self {
        BoostedScorer {
            features: FeaturizeConfig::new(FeatureKind::AreaSum),
            params: BoostedParams {
                seed,
                ..BoostedParams::default()
            },
        }
    }
}

impl Scorer for BoostedScorer {
    fn fit(&self, images: &[ImageSegments], vocab: &Vocabulary, targets: &BTreeMap<String, bool>) -> Result<Scoring> {
        let all = featurize_dataset(images, &self.features, vocab)?;
        let (fm, y) = all.labeled(targets);
        let model = train(&fm.x, &y, &Hyperparams::Boosted(self.params.clone()))?;
        let report = evaluate_grouped(&model, &fm.x, &y, &fm.countries)?;
        let proba = model.predict_proba(&all.x)?;
        Ok(Scoring {
            scores: all.image_ids.into_iter().zip(proba).collect(),
            report,
        })
    }
}
