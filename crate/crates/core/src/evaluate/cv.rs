use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::ConfusionCounts;
use crate::error::{Error, Result};
use crate::learners::{train, Hyperparams};
use crate::matrix::Matrix;
use crate::seed;

/// Fold index per sample. Each class is shuffled separately with a generator
/// seeded by `seed` (negatives first, then positives, from one stream) and
/// dealt round-robin, so every fold receives both classes.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = seed::rng(seed);
    let mut folds = vec![0; y.len()];
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < k {
            return Err(Error::InvalidParams(format!(
                "class {} has {} samples, fewer than {k} folds; use a smaller k",
                u8::from(class),
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (r, i) in idx.into_iter().enumerate() {
            folds[i] = r % k;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigScore {
    pub hyperparams: Hyperparams,
    pub fold_f1: Vec<Option<f64>>,
    /// Mean over folds with undefined F1 counted as 0.
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_index: usize,
    pub best: Hyperparams,
    pub scores: Vec<ConfigScore>,
    pub folds: Vec<usize>,
}

/// Stratified k-fold grid search maximizing mean validation F1. Ties go to
/// the earliest configuration in grid order.
pub fn cross_validate(x: &Matrix, y: &[bool], grid: &[Hyperparams], k: usize, seed: u64) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("empty hyperparameter grid".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    for hp in grid {
        hp.validate()?;
    }
    let folds = stratified_folds(y, k, seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..k)
        .map(|f| {
            let (val, fit): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| folds[i] == f);
            (fit, val)
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let results: Vec<Result<Option<f64>>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (fit, val) = &splits[f];
            let yf: Vec<bool> = fit.iter().map(|&i| y[i]).collect();
            let model = train(&x.select_rows(fit), &yf, &grid[c])?;
            let pred = model.predict(&x.select_rows(val))?;
            let truth: Vec<bool> = val.iter().map(|&i| y[i]).collect();
            Ok(ConfusionCounts::from_predictions(&truth, &pred).f1())
        })
        .collect();

    let mut results = results.into_iter();
    let mut scores = Vec::with_capacity(grid.len());
    for hp in grid {
        let fold_f1 = (0..k).map(|_| results.next().expect("one result per job")).collect::<Result<Vec<_>>>()?;
        let mean_f1 = fold_f1.iter().map(|f| f.unwrap_or(0.0)).sum::<f64>() / k as f64;
        scores.push(ConfigScore {
            hyperparams: hp.clone(),
            fold_f1,
            mean_f1,
        });
    }
    let mut best_index = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.mean_f1 > scores[best_index].mean_f1 {
            best_index = i;
        }
    }
    Ok(CvResult {
        best_index,
        best: grid[best_index].clone(),
        scores,
        folds,
    })
}
