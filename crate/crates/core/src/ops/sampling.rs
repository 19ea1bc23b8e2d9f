//! Weighted-bin annotation sampling: scores are bucketed into equal-width
//! bins and every nonempty bin receives the same draw probability.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const N_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub image_id: String,
    /// Absent for uniform plans.
    pub score: Option<f64>,
    pub bin: Option<usize>,
    pub weight: f64,
    pub drawn: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub seed: u64,
    pub size: usize,
    /// `N_BINS + 1` edges over [0, 1]; the last bin is closed.
    pub bin_edges: Vec<f64>,
    /// Candidate pool sorted by image id.
    pub entries: Vec<PlanEntry>,
    /// Drawn ids in draw order.
    pub drawn: Vec<String>,
}

pub fn bin_edges() -> Vec<f64> {
    (0..=N_BINS).map(|b| b as f64 / N_BINS as f64).collect()
}

/// Largest `b` with `score >= b / N_BINS`, capped at the last bin.
pub fn bin_of(score: f64) -> usize {
    let edge = |b: usize| b as f64 / N_BINS as f64;
    let mut b = ((score * N_BINS as f64).floor().max(0.0) as usize).min(N_BINS - 1);
    while b + 1 < N_BINS && score >= edge(b + 1) {
        b += 1;
    }
    while b > 0 && score < edge(b) {
        b -= 1;
    }
    b
}

/// Sampling weights `1 / (B * n_bin)` where `B` counts the nonempty bins.
pub fn bin_weights(scores: &[f64]) -> Vec<f64> {
    let mut counts = [0usize; N_BINS];
    let bins: Vec<usize> = scores.iter().map(|&s| bin_of(s)).collect();
    for &b in &bins {
        counts[b] += 1;
    }
    let nonempty = counts.iter().filter(|&&c| c > 0).count() as f64;
    bins.iter().map(|&b| 1.0 / (nonempty * counts[b] as f64)).collect()
}

/// Sequential weighted draws without replacement.
fn draw(weights: &[f64], m: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    let mut remaining: Vec<bool> = vec![true; weights.len()];
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let total: f64 = weights.iter().zip(&remaining).filter(|(_, &r)| r).map(|(w, _)| w).sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, (&w, &r)) in weights.iter().zip(&remaining).enumerate() {
            if !r {
                continue;
            }
            pick = Some(i);
            acc += w;
            if target < acc {
                break;
            }
        }
        // Rounding can leave target at the very end; the last live index is used.
        let i = pick.expect("pool is larger than the number of draws");
        remaining[i] = false;
        out.push(i);
    }
    out
}

fn sorted_pool<T: Clone>(pool: &[(String, T)]) -> Result<Vec<(String, T)>> {
    let mut pool = pool.to_vec();
    pool.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = pool.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Duplicate {
            line: 0,
            what: "image_id",
            id: w[0].0.clone(),
        });
    }
    Ok(pool)
}

fn check_size(m: usize, pool: usize) -> Result<()> {
    if m > pool {
        return Err(Error::InvalidInput(format!(
            "sample size {m} exceeds pool of {pool} images"
        )));
    }
    Ok(())
}

fn build(pool: Vec<(String, Option<f64>)>, weights: Vec<f64>, m: usize, seed: u64) -> SamplingPlan {
    let picks = draw(&weights, m, seed);
    let mut entries: Vec<PlanEntry> = pool
        .into_iter()
        .zip(weights)
        .map(|((image_id, score), weight)| PlanEntry {
            image_id,
            score,
            bin: score.map(bin_of),
            weight,
            drawn: false,
        })
        .collect();
    let drawn = picks
        .iter()
        .map(|&i| {
            entries[i].drawn = true;
            entries[i].image_id.clone()
        })
        .collect();
    SamplingPlan {
        seed,
        size: m,
        bin_edges: bin_edges(),
        entries,
        drawn,
    }
}

/// Draws `m` distinct images with weighted-bin probabilities.
pub fn weighted_sample(scores: &[(String, f64)], m: usize, seed: u64) -> Result<SamplingPlan> {
    check_size(m, scores.len())?;
    for (id, s) in scores {
        if !(0.0..=1.0).contains(s) {
            return Err(Error::InvalidInput(format!("score {s} of {id} outside [0, 1]")));
        }
    }
    let pool = sorted_pool(scores)?;
    let weights = bin_weights(&pool.iter().map(|p| p.1).collect::<Vec<_>>());
    let pool = pool.into_iter().map(|(id, s)| (id, Some(s))).collect();
    Ok(build(pool, weights, m, seed))
}

/// Draws `m` distinct images with equal probability.
pub fn uniform_sample(ids: &[String], m: usize, seed: u64) -> Result<SamplingPlan> {
    check_size(m, ids.len())?;
    let pool = sorted_pool(&ids.iter().map(|id| (id.clone(), None)).collect::<Vec<_>>())?;
    let weights = vec![1.0 / pool.len().max(1) as f64; pool.len()];
    Ok(build(pool, weights, m, seed))
}

impl SamplingPlan {
    /// Re-runs the draw from the stored pool, scores and seed.
    pub fn replay(&self) -> Result<SamplingPlan> {
        if self.entries.iter().all(|e| e.score.is_some()) && !self.entries.is_empty() {
            let scores: Vec<(String, f64)> = self
                .entries
                .iter()
                .map(|e| (e.image_id.clone(), e.score.unwrap_or_default()))
                .collect();
            weighted_sample(&scores, self.size, self.seed)
        } else {
            let ids: Vec<String> = self.entries.iter().map(|e| e.image_id.clone()).collect();
            uniform_sample(&ids, self.size, self.seed)
        }
    }

    /// CSV `image_id,score,bin,weight,drawn`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut res = w.write_record(["image_id", "score", "bin", "weight", "drawn"]);
        for e in &self.entries {
            res = res.and_then(|_| {
                w.write_record([
                    e.image_id.clone(),
                    e.score.map(|s| s.to_string()).unwrap_or_default(),
                    e.bin.map(|b| b.to_string()).unwrap_or_default(),
                    e.weight.to_string(),
                    e.drawn.to_string(),
                ])
            });
        }
        res.and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Computation(e.to_string()))
    }
}
