//! Second-order gradient boosting on the logistic loss.

use rand_chacha::ChaCha8Rng;

use super::logistic::{sigmoid, softplus};
use super::tree::{grow, Criterion, FeaturePick, NodeStats, Presorted, TreeArrays};
use super::BoostedParams;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct GradPair {
    pub g: f64,
    pub h: f64,
    pub n: f64,
}

impl NodeStats for GradPair {
    fn add(&mut self, o: &Self) {
        self.g += o.g;
        self.h += o.h;
        self.n += o.n;
    }

    fn minus(&self, o: &Self) -> Self {
        GradPair {
            g: self.g - o.g,
            h: self.h - o.h,
            n: self.n - o.n,
        }
    }

    fn weight(&self) -> f64 {
        self.n
    }
}

struct SecondOrder<'a> {
    grad: &'a [f64],
    hess: &'a [f64],
    lambda: f64,
    gamma: f64,
    learning_rate: f64,
}

impl SecondOrder<'_> {
    fn score(&self, s: &GradPair) -> f64 {
        s.g * s.g / (s.h + self.lambda)
    }
}

impl Criterion for SecondOrder<'_> {
    type Stats = GradPair;

    fn sample(&self, i: usize, weight: u32) -> GradPair {
        let w = weight as f64;
        GradPair {
            g: w * self.grad[i],
            h: w * self.hess[i],
            n: w,
        }
    }

    fn gain(&self, parent: &GradPair, left: &GradPair, right: &GradPair) -> Option<f64> {
        if left.h + self.lambda <= 0.0 || right.h + self.lambda <= 0.0 {
            return None;
        }
        let gain = 0.5 * (self.score(left) + self.score(right) - self.score(parent)) - self.gamma;
        (gain > 0.0).then_some(gain)
    }

    fn is_terminal(&self, _: &GradPair) -> bool {
        false
    }

    /// Leaf weight `-G / (H + lambda)`, already scaled by the learning rate.
    fn leaf_value(&self, s: &GradPair) -> f64 {
        let denom = s.h + self.lambda;
        if denom > 0.0 {
            -s.g / denom * self.learning_rate
        } else {
            0.0
        }
    }
}

pub(crate) struct BoostedFit {
    pub trees: Vec<TreeArrays>,
    /// Mean training log-loss before the first round and after each round.
    pub loss_trace: Vec<f64>,
}

pub(crate) fn mean_log_loss(raw: &[f64], y: &[bool]) -> f64 {
    let total: f64 = raw
        .iter()
        .zip(y)
        .map(|(&z, &t)| softplus(z) - if t { z } else { 0.0 })
        .sum();
    total / raw.len().max(1) as f64
}

pub(crate) fn fit(x: &Matrix, y: &[bool], hp: &BoostedParams) -> BoostedFit {
    let n = x.rows();
    let sorted = Presorted::new(x);
    let weights = vec![1u32; n];
    let mut raw = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(hp.n_rounds);
    let mut loss_trace = vec![mean_log_loss(&raw, y)];
    for _ in 0..hp.n_rounds {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = p - if y[i] { 1.0 } else { 0.0 };
            hess[i] = p * (1.0 - p);
        }
        let crit = SecondOrder {
            grad: &grad,
            hess: &hess,
            lambda: hp.l2_leaf,
            gamma: hp.min_loss_reduction,
            learning_rate: hp.learning_rate,
        };
        let tree = grow::<_, ChaCha8Rng>(x, &sorted, &weights, &crit, hp.max_depth, FeaturePick::All);
        for (i, r) in raw.iter_mut().enumerate() {
            *r += tree.predict_row(x.row(i));
        }
        loss_trace.push(mean_log_loss(&raw, y));
        trees.push(tree);
    }
    BoostedFit { trees, loss_trace }
}
