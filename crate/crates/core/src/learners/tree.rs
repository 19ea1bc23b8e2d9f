//! Level-wise exact greedy tree growth shared by CART, random forest and
//! gradient boosting. Each level scans every feature once in presorted order
//! and keeps, per open node, the best split seen so far. Candidates are
//! visited by ascending feature index and ascending threshold, and only a
//! strictly better gain replaces the incumbent, so ties resolve to the lowest
//! feature and then the lowest threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Flattened binary tree. Node 0 is the root; `feature < 0` marks a leaf.
/// Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeArrays {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
    /// Training weight that reached each node.
    pub cover: Vec<f64>,
}

impl TreeArrays {
    pub fn len(&self) -> usize {
        self.feature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature.is_empty()
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut n = 0;
        while self.feature[n] >= 0 {
            let f = self.feature[n] as usize;
            n = if row[f] <= self.threshold[n] {
                self.left[n] as usize
            } else {
                self.right[n] as usize
            };
        }
        n
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.value[self.leaf_index(row)]
    }

    pub fn depth(&self) -> usize {
        fn go(t: &TreeArrays, n: usize) -> usize {
            if t.feature[n] < 0 {
                0
            } else {
                1 + go(t, t.left[n] as usize).max(go(t, t.right[n] as usize))
            }
        }
        go(self, 0)
    }

    /// Feature indices used by at least one split.
    pub fn used_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.feature.iter().filter(|&&f| f >= 0).map(|&f| f as usize)
    }

    pub(crate) fn validate(&self, feature_count: usize) -> bool {
        let n = self.feature.len();
        n > 0
            && [self.threshold.len(), self.left.len(), self.right.len(), self.value.len(), self.cover.len()]
                .iter()
                .all(|&l| l == n)
            && (0..n).all(|i| {
                self.feature[i] < 0
                    || ((self.feature[i] as usize) < feature_count
                        && (self.left[i] as usize) < n
                        && (self.right[i] as usize) < n
                        && self.left[i] as usize > i
                        && self.right[i] as usize > i)
            })
    }
}

/// Per-feature sample order by ascending value (ties by index). Constant
/// columns get an empty order since they can never be split on.
pub(crate) struct Presorted {
    order: Vec<Vec<u32>>,
    /// Indices of the non-constant columns.
    splittable: Vec<usize>,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Self {
        let order = (0..x.cols())
            .map(|j| {
                let first = if x.rows() > 0 { x.get(0, j) } else { 0.0 };
                if x.column(j).all(|v| v == first) {
                    return Vec::new();
                }
                let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
                idx.sort_by(|&a, &b| x.get(a as usize, j).total_cmp(&x.get(b as usize, j)).then(a.cmp(&b)));
                idx
            })
            .collect::<Vec<Vec<u32>>>();
        let splittable = (0..order.len()).filter(|&j| !order[j].is_empty()).collect();
        Presorted { order, splittable }
    }
}

pub(crate) trait NodeStats: Copy + Default {
    fn add(&mut self, other: &Self);
    fn minus(&self, other: &Self) -> Self;
    fn weight(&self) -> f64;
}

pub(crate) trait Criterion {
    type Stats: NodeStats;
    /// Contribution of sample `i` counted `weight` times.
    fn sample(&self, i: usize, weight: u32) -> Self::Stats;
    /// Split score, or `None` when the split is not admissible.
    fn gain(&self, parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> Option<f64>;
    /// Nodes that must not be split further regardless of depth.
    fn is_terminal(&self, stats: &Self::Stats) -> bool;
    fn leaf_value(&self, stats: &Self::Stats) -> f64;
}

pub(crate) enum FeaturePick<'r, R: Rng> {
    All,
    /// Draw this many features per node without replacement.
    Subset(usize, &'r mut R),
}

/// Threshold strictly below `hi` and not below `lo`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = lo + (hi - lo) / 2.0;
    if t >= hi {
        lo
    } else {
        t
    }
}

fn improves(g: f64, best: f64) -> bool {
    g > best + 1e-12 * best.abs().max(1.0)
}

const ABSENT: u32 = u32::MAX;

pub(crate) fn grow<C: Criterion, R: Rng>(
    x: &Matrix,
    sorted: &Presorted,
    weights: &[u32],
    crit: &C,
    max_depth: usize,
    mut pick: FeaturePick<'_, R>,
) -> TreeArrays {
    let n = x.rows();
    let p = x.cols();
    let mut node_of: Vec<u32> = weights.iter().map(|&w| if w > 0 { 0 } else { ABSENT }).collect();

    let mut root = C::Stats::default();
    for i in 0..n {
        if weights[i] > 0 {
            root.add(&crit.sample(i, weights[i]));
        }
    }
    let mut stats = vec![root];
    let mut tree = TreeArrays {
        feature: vec![-1],
        threshold: vec![0.0],
        left: vec![0],
        right: vec![0],
        value: vec![crit.leaf_value(&root)],
        cover: vec![root.weight()],
    };

    let mut frontier: Vec<usize> = vec![0];
    for _depth in 0..max_depth {
        let open: Vec<usize> = frontier
            .iter()
            .copied()
            .filter(|&nd| !crit.is_terminal(&stats[nd]))
            .collect();
        if open.is_empty() || sorted.splittable.is_empty() {
            break;
        }
        let mut slot_of = vec![ABSENT; tree.len()];
        for (s, &nd) in open.iter().enumerate() {
            slot_of[nd] = s as u32;
        }
        // Subsets are drawn among columns that vary in the training data, so
        // constant columns never use up a node's feature budget.
        let allowed: Option<Vec<Vec<bool>>> = match &mut pick {
            FeaturePick::All => None,
            FeaturePick::Subset(k, rng) => Some(
                open.iter()
                    .map(|_| {
                        let mut mask = vec![false; p];
                        let pool = &sorted.splittable;
                        for j in rand::seq::index::sample(&mut **rng, pool.len(), (*k).min(pool.len())) {
                            mask[pool[j]] = true;
                        }
                        mask
                    })
                    .collect(),
            ),
        };

        let mut best: Vec<Option<(f64, usize, f64)>> = vec![None; open.len()];
        let mut running = vec![C::Stats::default(); open.len()];
        let mut last = vec![f64::NAN; open.len()];
        for j in 0..p {
            let order = &sorted.order[j];
            if order.is_empty() {
                continue;
            }
            running.iter_mut().for_each(|r| *r = C::Stats::default());
            for &i in order {
                let i = i as usize;
                let nd = node_of[i];
                if nd == ABSENT {
                    continue;
                }
                let s = slot_of[nd as usize];
                if s == ABSENT {
                    continue;
                }
                let s = s as usize;
                if let Some(mask) = &allowed {
                    if !mask[s][j] {
                        continue;
                    }
                }
                let v = x.get(i, j);
                if running[s].weight() > 0.0 && v > last[s] {
                    let parent = &stats[open[s]];
                    let right = parent.minus(&running[s]);
                    if let Some(g) = crit.gain(parent, &running[s], &right) {
                        if best[s].is_none_or(|(bg, _, _)| improves(g, bg)) {
                            best[s] = Some((g, j, midpoint(last[s], v)));
                        }
                    }
                }
                running[s].add(&crit.sample(i, weights[i]));
                last[s] = v;
            }
        }

        let mut next = Vec::new();
        let mut child_of = vec![(ABSENT, ABSENT); open.len()];
        for (s, &nd) in open.iter().enumerate() {
            if let Some((_, f, t)) = best[s] {
                let l = tree.len();
                for _ in 0..2 {
                    tree.feature.push(-1);
                    tree.threshold.push(0.0);
                    tree.left.push(0);
                    tree.right.push(0);
                    tree.value.push(0.0);
                    tree.cover.push(0.0);
                    stats.push(C::Stats::default());
                }
                tree.feature[nd] = f as i32;
                tree.threshold[nd] = t;
                tree.left[nd] = l as u32;
                tree.right[nd] = (l + 1) as u32;
                child_of[s] = (l as u32, (l + 1) as u32);
                next.push(l);
                next.push(l + 1);
            }
        }
        if next.is_empty() {
            break;
        }
        for i in 0..n {
            let nd = node_of[i];
            if nd == ABSENT {
                continue;
            }
            let s = slot_of[nd as usize];
            if s == ABSENT || child_of[s as usize].0 == ABSENT {
                continue;
            }
            let nd = nd as usize;
            let f = tree.feature[nd] as usize;
            let (l, r) = child_of[s as usize];
            let c = if x.get(i, f) <= tree.threshold[nd] { l } else { r };
            node_of[i] = c;
            stats[c as usize].add(&crit.sample(i, weights[i]));
        }
        for &c in &next {
            tree.value[c] = crit.leaf_value(&stats[c]);
            tree.cover[c] = stats[c].weight();
        }
        frontier = next;
    }
    tree
}

/// Weighted class counts for Gini impurity.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ClassCounts {
    pub total: f64,
    pub positive: f64,
}

impl NodeStats for ClassCounts {
    fn add(&mut self, o: &Self) {
        self.total += o.total;
        self.positive += o.positive;
    }

    fn minus(&self, o: &Self) -> Self {
        ClassCounts {
            total: self.total - o.total,
            positive: self.positive - o.positive,
        }
    }

    fn weight(&self) -> f64 {
        self.total
    }
}

fn gini(c: &ClassCounts) -> f64 {
    if c.total <= 0.0 {
        return 0.0;
    }
    let p = c.positive / c.total;
    2.0 * p * (1.0 - p)
}

pub(crate) struct Gini<'a> {
    pub y: &'a [bool],
    pub min_samples_leaf: usize,
}

impl Criterion for Gini<'_> {
    type Stats = ClassCounts;

    fn sample(&self, i: usize, weight: u32) -> ClassCounts {
        let w = weight as f64;
        ClassCounts {
            total: w,
            positive: if self.y[i] { w } else { 0.0 },
        }
    }

    fn gain(&self, parent: &ClassCounts, left: &ClassCounts, right: &ClassCounts) -> Option<f64> {
        let min = self.min_samples_leaf as f64;
        if left.total < min || right.total < min {
            return None;
        }
        let n = parent.total;
        Some(gini(parent) - left.total / n * gini(left) - right.total / n * gini(right))
    }

    fn is_terminal(&self, s: &ClassCounts) -> bool {
        s.positive == 0.0 || s.positive == s.total
    }

    fn leaf_value(&self, s: &ClassCounts) -> f64 {
        if s.total > 0.0 {
            s.positive / s.total
        } else {
            0.5
        }
    }
}
