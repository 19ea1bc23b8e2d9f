//! Second-level classifiers: logistic regression, CART, random forest and
//! gradient-boosted trees, behind one train / predict interface.

mod boosted;
mod forest;
pub mod logistic;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::featurize::FeatureSpec;
use logistic::sigmoid;
pub use tree::TreeArrays;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Logistic,
    Tree,
    Forest,
    Boosted,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 4] = [
        LearnerKind::Logistic,
        LearnerKind::Tree,
        LearnerKind::Forest,
        LearnerKind::Boosted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Logistic => "logistic",
            LearnerKind::Tree => "tree",
            LearnerKind::Forest => "forest",
            LearnerKind::Boosted => "boosted",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown learner {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iters: usize,
    /// Stop once the largest absolute gradient component is below this.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            c: 1.0,
            max_iters: 2000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            max_depth: 16,
            min_samples_leaf: 1,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedParams {
    pub max_depth: usize,
    pub n_rounds: usize,
    pub learning_rate: f64,
    /// Minimum gain (gamma) a split must exceed.
    pub min_loss_reduction: f64,
    /// L2 penalty on leaf weights (lambda).
    #[serde(default = "default_l2_leaf")]
    pub l2_leaf: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_l2_leaf() -> f64 {
    1.0
}

impl Default for BoostedParams {
    fn default() -> Self {
        BoostedParams {
            max_depth: 8,
            n_rounds: 200,
            learning_rate: 0.3,
            min_loss_reduction: 0.0,
            l2_leaf: 1.0,
            seed: 0,
        }
    }
}

/// Hyperparameters of one learner, tagged by `"learner"` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum Hyperparams {
    Logistic(LogisticParams),
    Tree(TreeParams),
    Forest(ForestParams),
    Boosted(BoostedParams),
}

impl Hyperparams {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Hyperparams::Logistic(_) => LearnerKind::Logistic,
            Hyperparams::Tree(_) => LearnerKind::Tree,
            Hyperparams::Forest(_) => LearnerKind::Forest,
            Hyperparams::Boosted(_) => LearnerKind::Boosted,
        }
    }

    pub fn default_for(kind: LearnerKind, seed: u64) -> Self {
        match kind {
            LearnerKind::Logistic => Hyperparams::Logistic(LogisticParams::default()),
            LearnerKind::Tree => Hyperparams::Tree(TreeParams::default()),
            LearnerKind::Forest => Hyperparams::Forest(ForestParams {
                seed,
                ..Default::default()
            }),
            LearnerKind::Boosted => Hyperparams::Boosted(BoostedParams {
                seed,
                ..Default::default()
            }),
        }
    }

    /// Search grid used when none is supplied.
    pub fn default_grid(kind: LearnerKind, seed: u64) -> Vec<Hyperparams> {
        match kind {
            LearnerKind::Logistic => [0.01, 0.1, 1.0, 10.0]
                .into_iter()
                .map(|c| {
                    Hyperparams::Logistic(LogisticParams {
                        c,
                        ..Default::default()
                    })
                })
                .collect(),
            LearnerKind::Tree => [1, 2, 4, 8, 16]
                .into_iter()
                .map(|d| {
                    Hyperparams::Tree(TreeParams {
                        max_depth: d,
                        min_samples_leaf: 1,
                    })
                })
                .collect(),
            LearnerKind::Forest => {
                let mut grid = Vec::new();
                for n_trees in [10, 100, 500, 1000] {
                    for max_features in [MaxFeatures::Sqrt, MaxFeatures::All] {
                        for min_samples_leaf in [1, 5] {
                            grid.push(Hyperparams::Forest(ForestParams {
                                n_trees,
                                max_features,
                                min_samples_leaf,
                                seed,
                                ..Default::default()
                            }));
                        }
                    }
                }
                grid
            }
            LearnerKind::Boosted => {
                let mut grid = Vec::new();
                for max_depth in [2, 4, 8] {
                    for n_rounds in [100, 1000, 10000] {
                        for learning_rate in [0.05, 0.3] {
                            for min_loss_reduction in [0.0, 1.0] {
                                grid.push(Hyperparams::Boosted(BoostedParams {
                                    max_depth,
                                    n_rounds,
                                    learning_rate,
                                    min_loss_reduction,
                                    l2_leaf: 1.0,
                                    seed,
                                }));
                            }
                        }
                    }
                }
                grid
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        match self {
            Hyperparams::Logistic(p) => {
                if !(p.c > 0.0 && p.c.is_finite()) {
                    return bad(format!("C must be > 0, got {}", p.c));
                }
                if !(p.tol >= 0.0) {
                    return bad("tol must be >= 0".into());
                }
            }
            Hyperparams::Tree(p) => {
                if p.max_depth < 1 || p.min_samples_leaf < 1 {
                    return bad("tree max_depth and min_samples_leaf must be >= 1".into());
                }
            }
            Hyperparams::Forest(p) => {
                if p.n_trees < 1 || p.max_depth < 1 || p.min_samples_leaf < 1 {
                    return bad("forest n_trees, max_depth and min_samples_leaf must be >= 1".into());
                }
                if let MaxFeatures::Fraction(f) = p.max_features {
                    if !(f > 0.0 && f <= 1.0) {
                        return bad(format!("max_features fraction must be in (0, 1], got {f}"));
                    }
                }
            }
            Hyperparams::Boosted(p) => {
                if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                    return bad(format!("learning_rate must be > 0, got {}", p.learning_rate));
                }
                if !(p.min_loss_reduction >= 0.0) || !(p.l2_leaf >= 0.0) {
                    return bad("min_loss_reduction and l2_leaf must be >= 0".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Fitted {
    Linear {
        mean: Vec<f64>,
        std: Vec<f64>,
        weights: Vec<f64>,
        intercept: f64,
    },
    /// Leaf values are class-1 probabilities, averaged over trees.
    ProbabilityTrees { trees: Vec<TreeArrays> },
    /// Leaf values are raw-score increments; the sum passes through a sigmoid.
    ScoreTrees { base_score: f64, trees: Vec<TreeArrays> },
}

const MODEL_FORMAT: &str = "segclf-model";
const MODEL_VERSION: u32 = 1;

/// A fitted classifier. Immutable; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub hyperparams: Hyperparams,
    pub feature_count: usize,
    pub n_samples: usize,
    /// Set by callers that featurize segments themselves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureSpec>,
    pub fitted: Fitted,
}

fn check_training_data(x: &Matrix, y: &[bool], need_both: bool) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    if need_both {
        let pos = y.iter().filter(|&&t| t).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::SingleClass);
        }
    }
    Ok(())
}

pub fn train(x: &Matrix, y: &[bool], hp: &Hyperparams) -> Result<TrainedModel> {
    hp.validate()?;
    let need_both = matches!(hp, Hyperparams::Logistic(_) | Hyperparams::Boosted(_));
    check_training_data(x, y, need_both)?;
    let fitted = match hp {
        Hyperparams::Logistic(p) => {
            let fit = logistic::fit(x, y, p)?;
            Fitted::Linear {
                mean: fit.standardizer.mean,
                std: fit.standardizer.std,
                weights: fit.weights,
                intercept: fit.intercept,
            }
        }
        Hyperparams::Tree(p) => {
            let forest = ForestParams {
                n_trees: 1,
                max_features: MaxFeatures::All,
                max_depth: p.max_depth,
                min_samples_leaf: p.min_samples_leaf,
                bootstrap: false,
                seed: 0,
            };
            Fitted::ProbabilityTrees {
                trees: forest::fit(x, y, &forest),
            }
        }
        Hyperparams::Forest(p) => Fitted::ProbabilityTrees {
            trees: forest::fit(x, y, p),
        },
        Hyperparams::Boosted(p) => Fitted::ScoreTrees {
            base_score: 0.0,
            trees: boosted::fit(x, y, p).trees,
        },
    };
    Ok(TrainedModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        hyperparams: hp.clone(),
        feature_count: x.cols(),
        n_samples: x.rows(),
        features: None,
        fitted,
    })
}

/// Boosted training that also reports the mean training log-loss before the
/// first round and after every round.
pub fn train_boosted_traced(x: &Matrix, y: &[bool], hp: &BoostedParams) -> Result<(TrainedModel, Vec<f64>)> {
    let params = Hyperparams::Boosted(hp.clone());
    params.validate()?;
    check_training_data(x, y, true)?;
    let fit = boosted::fit(x, y, hp);
    let model = TrainedModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        hyperparams: params,
        feature_count: x.cols(),
        n_samples: x.rows(),
        features: None,
        fitted: Fitted::ScoreTrees {
            base_score: 0.0,
            trees: fit.trees,
        },
    };
    Ok((model, fit.loss_trace))
}

impl TrainedModel {
    pub fn kind(&self) -> LearnerKind {
        self.hyperparams.kind()
    }

    /// Class-1 probability of a single row. The row width is not checked.
    pub fn predict_proba_row(&self, row: &[f64]) -> f64 {
        match &self.fitted {
            Fitted::Linear {
                mean,
                std,
                weights,
                intercept,
            } => {
                let mut z = *intercept;
                for j in 0..weights.len() {
                    if std[j] > 0.0 {
                        z += weights[j] * (row[j] - mean[j]) / std[j];
                    }
                }
                sigmoid(z)
            }
            Fitted::ProbabilityTrees { trees } => {
                trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / trees.len().max(1) as f64
            }
            Fitted::ScoreTrees { base_score, trees } => {
                sigmoid(base_score + trees.iter().map(|t| t.predict_row(row)).sum::<f64>())
            }
        }
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.feature_count {
            return Err(Error::InvalidInput(format!(
                "model expects {} features, got {}",
                self.feature_count,
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_width(x)?;
        Ok(x.row_iter().map(|r| self.predict_proba_row(r)).collect())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<bool>> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| p >= 0.5).collect())
    }

    /// Features the model can read. Linear models read every feature with a
    /// nonzero weight and variance.
    pub fn used_features(&self) -> Vec<bool> {
        let mut used = vec![false; self.feature_count];
        match &self.fitted {
            Fitted::Linear { std, weights, .. } => {
                for j in 0..weights.len() {
                    used[j] = weights[j] != 0.0 && std[j] > 0.0;
                }
            }
            Fitted::ProbabilityTrees { trees } | Fitted::ScoreTrees { trees, .. } => {
                for t in trees {
                    for f in t.used_features() {
                        used[f] = true;
                    }
                }
            }
        }
        used
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text).map_err(|e| Error::Malformed {
            line: e.line(),
            message: e.to_string(),
        })?;
        model.check_consistency()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn check_consistency(&self) -> Result<()> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model format {} v{}",
                self.format, self.version
            )));
        }
        let ok = match &self.fitted {
            Fitted::Linear {
                mean, std, weights, ..
            } => [mean.len(), std.len(), weights.len()].iter().all(|&l| l == self.feature_count),
            Fitted::ProbabilityTrees { trees } | Fitted::ScoreTrees { trees, .. } => {
                trees.iter().all(|t| t.validate(self.feature_count))
            }
        };
        if !ok {
            return Err(Error::InvalidInput("model parameters inconsistent with feature_count".into()));
        }
        Ok(())
    }
}
