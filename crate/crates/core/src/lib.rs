//! Interpretable image classification from instance-segmentation outputs.
//!
//! Per-image segments are aggregated into one of four feature vectors
//! ([`FeatureKind`]), classified by a from-scratch second-level learner
//! ([`learners`]), and explained by per-country permutation importance
//! ([`evaluate`]). The [`ops`] module holds the dataset-construction
//! algorithms: de-duplication, reliability, splitting, weighted-bin
//! sampling, clustering, temporal aggregation and object matching.

pub mod data;
pub mod error;
pub mod evaluate;
pub mod featurize;
pub mod learners;
pub mod matrix;
pub mod ops;
pub mod seed;
pub mod synthetic;

pub use data::{
    binary_targets, EmbeddingMatrix, ImageSegments, Label, LabelRecord, SegmentRecord, Vocabulary,
};
pub use error::{Error, ErrorKind, Result};
pub use evaluate::{ConfusionCounts, EvalReport, ImportanceReport};
pub use featurize::{featurize, featurize_dataset, FeatureKind, FeatureMatrix, FeatureSpec, FeatureVector, FeaturizeConfig};
pub use learners::{Hyperparams, LearnerKind, TrainedModel};
pub use matrix::Matrix;
