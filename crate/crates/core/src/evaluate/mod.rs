//! Metrics, grouped evaluation, cross-validated grid search and permutation
//! importance.

mod cv;
mod importance;
mod metrics;

pub use cv::{cross_validate, stratified_folds, ConfigScore, CvResult};
pub use importance::{permutation_importance, ImportanceOptions, ImportanceReport};
pub use metrics::{evaluate_grouped, metrics, write_reports_csv, ConfusionCounts, EvalReport, ALL_GROUP};
