//! Near-duplicate detection: cosine similarity over all pairs, connected
//! components of the thresholded similarity graph.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_SIMILARITY: f64 = 0.99;

/// Absorbs rounding in the normalized dot product so that pairs sitting
/// exactly on the threshold stay inclusive.
const SIMILARITY_SLACK: f64 = 1e-12;
const BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    /// Sorted member ids; at least two.
    pub members: Vec<String>,
    /// Lexicographically smallest member.
    pub kept: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DuplicateClusters {
    /// Ordered by kept id.
    pub clusters: Vec<DuplicateCluster>,
    /// Every member that is not its cluster's representative, sorted.
    pub dropped: Vec<String>,
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Rows with zero norm have no similarity to anything and are never merged.
pub fn deduplicate(emb: &EmbeddingMatrix, threshold: f64) -> DuplicateClusters {
    let n = emb.len();
    let dim = emb.dim();
    let mut unit = vec![0.0; n * dim];
    for i in 0..n {
        let row = emb.row(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (u, v) in unit[i * dim..(i + 1) * dim].iter_mut().zip(row) {
                *u = v / norm;
            }
        }
    }
    let unit = &unit;
    let cutoff = threshold - SIMILARITY_SLACK;
    let blocks: Vec<usize> = (0..n).step_by(BLOCK).collect();
    let edges: Vec<(usize, usize)> = blocks
        .par_iter()
        .flat_map_iter(|&start| {
            let end = (start + BLOCK).min(n);
            let mut found = Vec::new();
            for i in start..end {
                let a = &unit[i * dim..(i + 1) * dim];
                for j in i + 1..n {
                    let b = &unit[j * dim..(j + 1) * dim];
                    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                    if dot >= cutoff {
                        found.push((i, j));
                    }
                }
            }
            found
        })
        .collect();

    let mut uf = UnionFind::new(n);
    for (i, j) in edges {
        uf.union(i, j);
    }
    let mut comps: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for i in 0..n {
        let r = uf.find(i);
        comps.entry(r).or_default().push(emb.image_ids()[i].clone());
    }
    let mut clusters: Vec<DuplicateCluster> = comps
        .into_values()
        .filter(|m| m.len() >= 2)
        .map(|mut members| {
            members.sort();
            DuplicateCluster {
                kept: members[0].clone(),
                members,
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.kept.cmp(&b.kept));
    let mut dropped: Vec<String> = clusters.iter().flat_map(|c| c.members[1..].iter().cloned()).collect();
    dropped.sort();
    DuplicateClusters { clusters, dropped }
}

impl DuplicateClusters {
    /// CSV `cluster_id,image_id,kept`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut res = w.write_record(["cluster_id", "image_id", "kept"]);
        for (c, cluster) in self.clusters.iter().enumerate() {
            for m in &cluster.members {
                res = res.and_then(|_| w.write_record([c.to_string(), m.clone(), (*m == cluster.kept).to_string()]));
            }
        }
        res.and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Computation(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn emb(rows: &[Vec<f64>]) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("img{i:03}")).collect();
        EmbeddingMatrix::new(ids, Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn identical_vectors() {
        let d = deduplicate(&emb(&[vec![1.0, 2.0], vec![1.0, 2.0]]), DEFAULT_SIMILARITY);
        assert_eq!(d.clusters.len(), 1);
        assert_eq!(d.clusters[0].kept, "img000");
        assert_eq!(d.dropped, ["img001"]);
    }

    #[test]
    fn orthogonal_vectors() {
        let d = deduplicate(&emb(&[vec![1.0, 0.0], vec![0.0, 1.0]]), DEFAULT_SIMILARITY);
        assert!(d.clusters.is_empty() && d.dropped.is_empty());
    }

    #[test]
    fn threshold_boundary() {
        let d = deduplicate(&emb(&[vec![1.0, 0.0], vec![0.99, 0.141]]), DEFAULT_SIMILARITY);
        assert_eq!(d.clusters.len(), 1);
        let d = deduplicate(&emb(&[vec![1.0, 0.0], vec![0.98, 0.199]]), DEFAULT_SIMILARITY);
        assert!(d.clusters.is_empty());
    }

    #[test]
    fn chains_merge_transitively() {
        // a~b and b~c at 0.995, a and c below the threshold.
        let ang = 0.995f64.acos();
        let rows: Vec<Vec<f64>> = (0..3).map(|k| vec![(k as f64 * ang).cos(), (k as f64 * ang).sin()]).collect();
        let d = deduplicate(&emb(&rows), DEFAULT_SIMILARITY);
        assert_eq!(d.clusters.len(), 1);
        assert_eq!(d.clusters[0].members.len(), 3);
        assert_eq!(d.dropped.len(), 2);
    }

    #[test]
    fn csv_output() {
        let d = deduplicate(&emb(&[vec![1.0], vec![2.0]]), DEFAULT_SIMILARITY);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "cluster_id,image_id,kept\n0,img000,true\n0,img001,false\n");
    }
}
