//! Lloyd's k-means with k-means++ seeding, used for cluster-level error
//! analysis of image embeddings.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl KMeansOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansOptions {
            k,
            seed,
            max_iters: 300,
            tol: 1e-4,
        }
    }
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions::new(30, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub centroids: Matrix,
    pub image_ids: Vec<String>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step, ending with the final one.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ClusterAssignment {
    pub fn cluster_of(&self, image_id: &str) -> Option<usize> {
        self.image_ids.iter().position(|id| id == image_id).map(|i| self.assignment[i])
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }

    /// CSV `image_id,cluster`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut res = w.write_record(["image_id", "cluster"]);
        for (id, c) in self.image_ids.iter().zip(&self.assignment) {
            res = res.and_then(|_| w.write_record([id.clone(), c.to_string()]));
        }
        res.and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Computation(e.to_string()))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid (lowest index on ties) and its squared distance.
fn nearest(row: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.row_iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(x: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>) {
    (0..x.rows()).into_par_iter().map(|i| nearest(x.row(i), centroids)).unzip()
}

fn plus_plus_init<R: Rng>(x: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = x.rows();
    let mut centroids = Matrix::zeros(k, x.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && target < acc {
                    pick = i;
                    break;
                }
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

/// Means of the assigned rows; an empty cluster takes the point farthest
/// from its centroid among clusters with more than one member.
fn update(x: &Matrix, assignment: &mut [usize], old: &Matrix) -> Matrix {
    let (k, dim) = (old.rows(), old.cols());
    let mut sums = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        counts[a] += 1;
        for (s, v) in sums.row_mut(a).iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    let mut centroids = sums;
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            centroids.row_mut(c).iter_mut().for_each(|v| *v /= n);
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let donor = (0..x.rows())
            .filter(|&i| counts[assignment[i]] > 1)
            .map(|i| (i, sq_dist(x.row(i), centroids.row(assignment[i]))))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = donor {
            counts[assignment[i]] -= 1;
            assignment[i] = c;
            counts[c] = 1;
            centroids.row_mut(c).copy_from_slice(x.row(i));
        } else {
            centroids.row_mut(c).copy_from_slice(old.row(c));
        }
    }
    centroids
}

pub fn kmeans(emb: &EmbeddingMatrix, opts: &KMeansOptions) -> Result<ClusterAssignment> {
    let x = emb.values();
    if opts.k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    if opts.k > x.rows() {
        return Err(Error::InvalidParams(format!(
            "k = {} exceeds the {} available rows",
            opts.k,
            x.rows()
        )));
    }
    if !(opts.tol >= 0.0) {
        return Err(Error::InvalidParams(format!("tol = {} must be nonnegative", opts.tol)));
    }
    let mut rng = seed::rng(opts.seed);
    let mut centroids = plus_plus_init(x, opts.k, &mut rng);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let (mut assignment, dists) = assign(x, &centroids);
        history.push(dists.iter().sum::<f64>());
        let next = update(x, &mut assignment, &centroids);
        let shift = centroids
            .row_iter()
            .zip(next.row_iter())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        iterations += 1;
        if shift < opts.tol {
            converged = true;
            break;
        }
    }
    let (assignment, dists) = assign(x, &centroids);
    let inertia = dists.iter().sum::<f64>();
    history.push(inertia);
    Ok(ClusterAssignment {
        k: opts.k,
        centroids,
        image_ids: emb.image_ids().to_vec(),
        assignment,
        inertia,
        inertia_history: history,
        iterations,
        converged,
    })
}
