use rand::Rng;
use rayon::prelude::*;

use super::tree::{grow, FeaturePick, Gini, Presorted, TreeArrays};
use super::{ForestParams, MaxFeatures};
use crate::matrix::Matrix;
use crate::seed;

impl MaxFeatures {
    pub fn resolve(&self, p: usize) -> usize {
        let k = match *self {
            MaxFeatures::Sqrt => (p as f64).sqrt().floor() as usize,
            MaxFeatures::All => p,
            MaxFeatures::Fraction(f) => (f * p as f64).floor() as usize,
        };
        k.clamp(1, p.max(1))
    }
}

/// Each tree draws from its own generator seeded with `seed + tree_index`:
/// first the bootstrap sample, then per-node feature subsets.
pub(crate) fn fit(x: &Matrix, y: &[bool], hp: &ForestParams) -> Vec<TreeArrays> {
    let sorted = Presorted::new(x);
    let n = x.rows();
    let k = hp.max_features.resolve(x.cols());
    let crit = Gini {
        y,
        min_samples_leaf: hp.min_samples_leaf,
    };
    (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(hp.seed.wrapping_add(t as u64));
            let weights = if hp.bootstrap {
                let mut w = vec![0u32; n];
                for _ in 0..n {
                    w[rng.random_range(0..n)] += 1;
                }
                w
            } else {
                vec![1u32; n]
            };
            let pick = if k >= x.cols() {
                FeaturePick::All
            } else {
                FeaturePick::Subset(k, &mut rng)
            };
            grow(x, &sorted, &weights, &crit, hp.max_depth, pick)
        })
        .collect()
}
