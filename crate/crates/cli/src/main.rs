//! `segclf`: every pipeline stage as a scripted, reproducible command.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input data, 3 the
//! computation could not be carried out (e.g. a single-class training set).

mod commands;
mod failure;
mod inputs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segclf_core::{FeatureKind, LearnerKind};
use serde::Serialize;

use failure::Failure;

#[derive(Parser)]
#[command(name = "segclf", version, about = "Segment-based image classification pipeline")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
enum Command {
    /// Export per-image feature vectors as CSV.
    Featurize(FeaturizeArgs),
    /// Train one classifier and report its training fit.
    Train(TrainArgs),
    /// Evaluate a saved model, grouped by country or cluster.
    Eval(EvalArgs),
    /// Stratified k-fold grid search.
    Cv(CvArgs),
    /// Per-country permutation importance of a saved model.
    Importance(ImportanceArgs),
    /// Cluster near-duplicate embeddings.
    Dedup(DedupArgs),
    /// Cohen's kappa and ICC(1) over multiply-annotated images.
    Reliability(ReliabilityArgs),
    /// Stratified train/test split by country and label.
    Split(SplitArgs),
    /// Draw an annotation batch by weighted-bin (or uniform) sampling.
    Sample(SampleArgs),
    /// KMeans clustering of embeddings.
    Kmeans(KMeansArgs),
    /// Daily segment counts per country and category.
    Temporal(TemporalArgs),
    /// Write a synthetic segments/labels dataset with a known rule.
    Synth(SynthArgs),
}

#[derive(Args, Serialize, Clone)]
pub struct SegmentArgs {
    /// Segments file (JSON Lines).
    #[arg(long)]
    pub segments: PathBuf,
    /// Vocabulary: coco, lvis or a path to a one-name-per-line file.
    #[arg(long)]
    pub vocab: Option<String>,
    /// Minimum segment score kept (inclusive).
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args, Serialize, Clone)]
pub struct SubsetArgs {
    /// Split file written by `segclf split`.
    #[arg(long, requires = "subset")]
    pub split: Option<PathBuf>,
    /// Which side of the split to use.
    #[arg(long, requires = "split", value_parser = ["train", "test"])]
    pub subset: Option<String>,
}

#[derive(Args, Serialize)]
pub struct FeaturizeArgs {
    #[command(flatten)]
    pub input: SegmentArgs,
    #[arg(long, value_parser = parse_kind)]
    pub kind: FeatureKind,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: SegmentArgs,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub kind: FeatureKind,
    /// Learner with default hyperparameters; optional with --params.
    #[arg(long, value_parser = parse_learner, required_unless_present = "params")]
    pub learner: Option<LearnerKind>,
    /// Hyperparameter JSON, e.g. best_params.json from `segclf cv`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Seed for every stochastic learner; replaces any seed in --params.
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub subset: SubsetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: SegmentArgs,
    #[arg(long)]
    pub labels: PathBuf,
    /// Defaults to the kind recorded in the model.
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<FeatureKind>,
    /// Group by cluster (clusters.csv from `segclf kmeans`) instead of country.
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    #[command(flatten)]
    pub subset: SubsetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub input: SegmentArgs,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub kind: FeatureKind,
    #[arg(long, value_parser = parse_learner, required_unless_present = "grid")]
    pub learner: Option<LearnerKind>,
    /// JSON array of hyperparameter objects; defaults to the learner's grid.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub subset: SubsetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: SegmentArgs,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<FeatureKind>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Comma-separated categories to score (default: all).
    #[arg(long, value_delimiter = ',')]
    pub categories: Option<Vec<String>>,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub subset: SubsetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct DedupArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value_t = segclf_core::ops::DEFAULT_SIMILARITY)]
    pub similarity: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct ReliabilityArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct SplitArgs {
    #[command(flatten)]
    pub input: SegmentArgs,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct SampleArgs {
    /// Candidate pool; required unless --scores is given.
    #[arg(long, required_unless_present = "scores")]
    pub segments: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<String>,
    /// CSV `image_id,score`; enables weighted-bin sampling.
    #[arg(long, conflicts_with = "model")]
    pub scores: Option<PathBuf>,
    /// Score the pool with this model; enables weighted-bin sampling.
    #[arg(long, requires = "segments")]
    pub model: Option<PathBuf>,
    /// Images already labeled here are removed from the pool.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub size: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct KMeansArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub k: usize,
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct TemporalArgs {
    #[command(flatten)]
    pub input: SegmentArgs,
    /// Categories kept per country in temporal_top.csv.
    #[arg(long, default_value_t = segclf_core::ops::TOP_N)]
    pub top: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub n_images: usize,
    #[arg(long, default_value_t = 0.11)]
    pub positive_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub label_noise: f64,
    /// Comma-separated country codes.
    #[arg(long, value_delimiter = ',')]
    pub countries: Option<Vec<String>>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_kind(s: &str) -> Result<FeatureKind, String> {
    s.parse().map_err(|_| "expected one of binary, count, area_max, area_sum".to_string())
}

fn parse_learner(s: &str) -> Result<LearnerKind, String> {
    s.parse().map_err(|_| "expected one of logistic, tree, forest, boosted".to_string())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot configure {n} threads: {e}")))?;
    }
    let config = serde_json::to_value(&cli.command).expect("arguments serialize");
    match &cli.command {
        Command::Featurize(a) => commands::featurize(a, config),
        Command::Train(a) => commands::train(a, config),
        Command::Eval(a) => commands::eval(a, config),
        Command::Cv(a) => commands::cv(a, config),
        Command::Importance(a) => commands::importance(a, config),
        Command::Dedup(a) => commands::dedup(a, config),
        Command::Reliability(a) => commands::reliability(a, config),
        Command::Split(a) => commands::split(a, config),
        Command::Sample(a) => commands::sample(a, config),
        Command::Kmeans(a) => commands::kmeans(a, config),
        Command::Temporal(a) => commands::temporal(a, config),
        Command::Synth(a) => commands::synth(a, config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
