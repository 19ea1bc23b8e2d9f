//! Dataset-construction algorithms.

pub mod dedup;
pub mod kmeans;
pub mod matching;
pub mod reliability;
pub mod sampling;
pub mod split;
pub mod temporal;

pub use dedup::{deduplicate, DuplicateCluster, DuplicateClusters, DEFAULT_SIMILARITY};
pub use kmeans::{kmeans, ClusterAssignment, KMeansOptions};
pub use matching::{match_objects, normalize_name, MatchReport, SynonymDictionary};
pub use reliability::{cohen_kappa, icc1, reliability_report, ReliabilityReport};
pub use sampling::{bin_of, bin_weights, uniform_sample, weighted_sample, PlanEntry, SamplingPlan, N_BINS};
pub use split::{split_train_test, train_count, Split, SplitItem};
pub use temporal::{temporal_counts, TemporalReport, TemporalRow, TOP_N};
