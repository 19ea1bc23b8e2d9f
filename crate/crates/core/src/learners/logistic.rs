//! L2-regularized logistic regression on standardized features, fitted by
//! full-batch gradient descent with Armijo backtracking.

use super::LogisticParams;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let p = x.cols();
        let mut mean = vec![0.0; p];
        for row in x.row_iter() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for row in x.row_iter() {
            for j in 0..p {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Standardizer { mean, std }
    }

    /// Zero-variance columns map to 0.
    pub fn transform_value(&self, j: usize, v: f64) -> f64 {
        if self.std[j] > 0.0 {
            (v - self.mean[j]) / self.std[j]
        } else {
            0.0
        }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.transform_value(j, *v);
            }
        }
        out
    }
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Regularized negative log-likelihood over parameters `theta = [w..., b]`:
/// `sum_i softplus(z_i) - y_i z_i + (1/C) * 0.5 * |w|^2`, intercept unpenalized.
pub struct LogisticObjective<'a> {
    pub x: &'a Matrix,
    pub y: &'a [bool],
    pub c: f64,
}

impl LogisticObjective<'_> {
    fn margin(&self, theta: &[f64], i: usize) -> f64 {
        let p = self.x.cols();
        let row = self.x.row(i);
        theta[p] + row.iter().zip(&theta[..p]).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let p = self.x.cols();
        let nll: f64 = (0..self.x.rows())
            .map(|i| {
                let z = self.margin(theta, i);
                softplus(z) - if self.y[i] { z } else { 0.0 }
            })
            .sum();
        let reg: f64 = theta[..p].iter().map(|w| w * w).sum::<f64>() * 0.5 / self.c;
        nll + reg
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.x.cols();
        let mut g = vec![0.0; p + 1];
        for i in 0..self.x.rows() {
            let r = sigmoid(self.margin(theta, i)) - if self.y[i] { 1.0 } else { 0.0 };
            for (gj, xj) in g[..p].iter_mut().zip(self.x.row(i)) {
                *gj += r * xj;
            }
            g[p] += r;
        }
        for j in 0..p {
            g[j] += theta[j] / self.c;
        }
        g
    }
}

pub(crate) struct LogisticFit {
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

pub(crate) fn fit(x: &Matrix, y: &[bool], hp: &LogisticParams) -> Result<LogisticFit> {
    if !(hp.c > 0.0 && hp.c.is_finite()) {
        return Err(Error::InvalidParams(format!("C must be positive, got {}", hp.c)));
    }
    let standardizer = Standardizer::fit(x);
    let xs = standardizer.transform(x);
    let obj = LogisticObjective { x: &xs, y, c: hp.c };
    let p = x.cols();
    let mut theta = vec![0.0; p + 1];
    let mut f = obj.value(&theta);
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < hp.max_iters {
        let g = obj.gradient(&theta);
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax < hp.tol {
            break;
        }
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        // Armijo backtracking, starting from twice the last accepted step.
        step *= 2.0;
        let mut candidate;
        loop {
            candidate = theta.iter().zip(&g).map(|(t, d)| t - step * d).collect::<Vec<_>>();
            let fc = obj.value(&candidate);
            if fc <= f - 0.5 * step * gnorm2 {
                f = fc;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return Ok(finish(standardizer, theta));
            }
        }
        theta = candidate;
        iterations += 1;
    }
    Ok(finish(standardizer, theta))
}

fn finish(standardizer: Standardizer, mut theta: Vec<f64>) -> LogisticFit {
    let intercept = theta.pop().unwrap_or(0.0);
    LogisticFit {
        standardizer,
        weights: theta,
        intercept,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_column_is_zeroed() {
        let x = Matrix::from_rows(&[vec![3.0, 1.0], vec![3.0, 2.0]]).unwrap();
        let s = Standardizer::fit(&x);
        let t = s.transform(&x);
        assert_eq!(t.get(0, 0), 0.0);
        assert_eq!(t.get(0, 1), -1.0);
        assert_eq!(t.get(1, 1), 1.0);
    }
}
