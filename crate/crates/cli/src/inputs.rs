//! Loading and featurizing the files named on the command line.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use segclf_core::data::{load_labels, load_segments};
use segclf_core::{
    binary_targets, featurize_dataset, FeatureKind, FeatureMatrix, FeaturizeConfig, ImageSegments,
    LabelRecord, TrainedModel, Vocabulary,
};
use serde::Deserialize;

use crate::failure::{Context, Failure};
use crate::manifest::Run;
use crate::{SegmentArgs, SubsetArgs};

pub const DEFAULT_VOCAB: &str = "lvis";

pub fn vocabulary(spec: Option<&str>) -> Result<Vocabulary, Failure> {
    let spec = spec.unwrap_or(DEFAULT_VOCAB);
    Vocabulary::resolve(spec).map_err(|e| Failure::usage(format!("--vocab {spec}: {e}")))
}

pub fn config(kind: FeatureKind, threshold: Option<f64>) -> Result<FeaturizeConfig, Failure> {
    let cfg = FeaturizeConfig::new(kind);
    match threshold {
        None => Ok(cfg),
        Some(t) if (0.0..=1.0).contains(&t) => Ok(cfg.with_threshold(t)),
        Some(t) => Err(Failure::usage(format!("--threshold must be in [0, 1], got {t}"))),
    }
}

pub fn segments(run: &mut Run, path: &Path, vocab: &Vocabulary) -> Result<Vec<ImageSegments>, Failure> {
    run.input(path)?;
    load_segments(path, vocab).context(format!("reading {}", path.display()))
}

pub fn labels(run: &mut Run, path: &Path) -> Result<Vec<LabelRecord>, Failure> {
    run.input(path)?;
    load_labels(path).context(format!("reading {}", path.display()))
}

/// Vocabulary and featurization for a saved model. Flags may repeat what the
/// model records but must not contradict it.
pub fn model_features(
    model: &TrainedModel,
    input: &SegmentArgs,
    kind: Option<FeatureKind>,
) -> Result<(Vocabulary, FeaturizeConfig), Failure> {
    let (vocab, cfg) = match &model.features {
        Some(spec) => {
            let vocab = vocabulary(Some(input.vocab.as_deref().unwrap_or(&spec.vocabulary)))?;
            if vocab.name() != spec.vocabulary {
                return Err(Failure::usage(format!(
                    "model was trained on vocabulary {:?}, --vocab gives {:?}",
                    spec.vocabulary,
                    vocab.name()
                )));
            }
            if kind.is_some_and(|k| k != spec.kind) {
                return Err(Failure::usage(format!("model was trained on {} features", spec.kind.as_str())));
            }
            if input.threshold.is_some_and(|t| t != spec.score_threshold) {
                return Err(Failure::usage(format!(
                    "model was trained with score threshold {}",
                    spec.score_threshold
                )));
            }
            (vocab, spec.config())
        }
        None => {
            let kind = kind.ok_or_else(|| Failure::usage("model records no feature kind; pass --kind"))?;
            (vocabulary(input.vocab.as_deref())?, config(kind, input.threshold)?)
        }
    };
    if vocab.size() != model.feature_count {
        return Err(Failure::data(format!(
            "model expects {} features but vocabulary {:?} has {}",
            model.feature_count,
            vocab.name(),
            vocab.size()
        )));
    }
    Ok((vocab, cfg))
}

pub fn load_model(run: &mut Run, path: &Path) -> Result<TrainedModel, Failure> {
    run.input(path)?;
    TrainedModel::load(path).context(format!("reading {}", path.display()))
}

#[derive(Deserialize)]
struct SplitRow {
    image_id: String,
    subset: String,
}

/// Image ids assigned to `subset` in a split file.
pub fn read_subset(run: &mut Run, path: &Path, subset: &str) -> Result<BTreeSet<String>, Failure> {
    run.input(path)?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut out = BTreeSet::new();
    for row in rdr.deserialize::<SplitRow>() {
        let row = row.map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        if row.subset != "train" && row.subset != "test" {
            return Err(Failure::data(format!("{}: unknown subset {:?}", path.display(), row.subset)));
        }
        if row.subset == subset {
            out.insert(row.image_id);
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct ScoreRow {
    image_id: String,
    score: f64,
}

pub fn read_scores(run: &mut Run, path: &Path) -> Result<Vec<(String, f64)>, Failure> {
    run.input(path)?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    rdr.deserialize::<ScoreRow>()
        .map(|r| {
            r.map(|r| (r.image_id, r.score))
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
        })
        .collect()
}

#[derive(Deserialize)]
struct ClusterRow {
    image_id: String,
    cluster: usize,
}

pub fn read_clusters(run: &mut Run, path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    run.input(path)?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    rdr.deserialize::<ClusterRow>()
        .map(|r| {
            r.map(|r| (r.image_id, r.cluster.to_string()))
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Featurized rows that have a label, optionally restricted to one side of
/// a split.
pub fn labeled_rows(
    run: &mut Run,
    images: &[ImageSegments],
    cfg: &FeaturizeConfig,
    vocab: &Vocabulary,
    labels: &[LabelRecord],
    subset: &SubsetArgs,
) -> Result<(FeatureMatrix, Vec<bool>), Failure> {
    let fm = featurize_dataset(images, cfg, vocab)?;
    let mut targets = binary_targets(labels);
    if let (Some(path), Some(which)) = (&subset.split, &subset.subset) {
        let keep = read_subset(run, path, which)?;
        targets.retain(|id, _| keep.contains(id));
    }
    let (fm, y) = fm.labeled(&targets);
    if fm.rows() == 0 {
        return Err(Failure::data("no labeled images match the segments file"));
    }
    Ok((fm, y))
}
