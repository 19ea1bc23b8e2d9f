use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use segclf_core::ops::{
    bin_of, cohen_kappa, deduplicate, icc1, kmeans, split_train_test, uniform_sample, weighted_sample,
    KMeansOptions, SplitItem, DEFAULT_SIMILARITY, N_BINS,
};
use segclf_core::{EmbeddingMatrix, Matrix};

fn embeddings(rows: &[Vec<f64>]) -> EmbeddingMatrix {
    let ids = (0..rows.len()).map(|i| format!("v{i:04}")).collect();
    EmbeddingMatrix::new(ids, Matrix::from_rows(rows).unwrap()).unwrap()
}

// ---------- de-duplication ----------

#[test]
fn threshold_is_inclusive_at_the_boundary() {
    let inside = embeddings(&[vec![1.0, 0.0], vec![0.99, 0.141]]);
    let cos = 0.99 / (0.99f64 * 0.99 + 0.141 * 0.141).sqrt();
    assert!((cos - 0.99).abs() < 1e-3);
    assert_eq!(deduplicate(&inside, cos).clusters.len(), 1);
    assert_eq!(deduplicate(&inside, DEFAULT_SIMILARITY).clusters.len(), 1);
    assert!(deduplicate(&inside, cos + 1e-6).clusters.is_empty());
    let outside = embeddings(&[vec![1.0, 0.0], vec![0.98, 0.199]]);
    assert!(deduplicate(&outside, DEFAULT_SIMILARITY).clusters.is_empty());
}

/// Connected components of the pairwise `cos >= t` graph by depth-first
/// search over an explicit adjacency matrix.
fn brute_force_components(rows: &[Vec<f64>], t: f64) -> BTreeSet<Vec<usize>> {
    let n = rows.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                    i != j && dot / (norm(&rows[i]) * norm(&rows[j])) >= t
                })
                .collect()
        })
        .collect();
    let mut seen = vec![false; n];
    let mut comps = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut stack = vec![s];
        let mut comp = Vec::new();
        seen[s] = true;
        while let Some(u) = stack.pop() {
            comp.push(u);
            for v in 0..n {
                if adj[u][v] && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if comp.len() > 1 {
            comp.sort();
            comps.insert(comp);
        }
    }
    comps
}

fn clustered_vectors(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let bases: Vec<Vec<f64>> = (0..n / 5).map(|_| (0..8).map(|_| normal.sample(&mut rng)).collect()).collect();
    (0..n)
        .map(|_| {
            let b = &bases[rng.random_range(0..bases.len())];
            let scale = [0.0, 0.02, 0.05, 0.1, 0.3][rng.random_range(0..5)];
            b.iter().map(|v| v + scale * normal.sample(&mut rng)).collect()
        })
        .collect()
}

#[test]
fn components_match_brute_force() {
    for seed in 0..5 {
        let rows = clustered_vectors(seed, 200);
        let emb = embeddings(&rows);
        for t in [0.9, 0.99, 0.999] {
            let got = deduplicate(&emb, t);
            let want = brute_force_components(&rows, t);
            let got_sets: BTreeSet<Vec<usize>> = got
                .clusters
                .iter()
                .map(|c| c.members.iter().map(|m| m[1..].parse().unwrap()).collect())
                .collect();
            assert_eq!(got_sets, want, "seed {seed}, threshold {t}");
            let dropped: usize = want.iter().map(|c| c.len() - 1).sum();
            assert_eq!(got.dropped.len(), dropped);
            for c in &got.clusters {
                assert_eq!(&c.kept, c.members.iter().min().unwrap());
                assert!(!got.dropped.contains(&c.kept));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn raising_the_threshold_never_merges(seed in 0u64..1000, lo in 0.8f64..0.999, gap in 0.0f64..0.05) {
        let emb = embeddings(&clustered_vectors(seed, 60));
        let hi = (lo + gap).min(1.0);
        let coarse = deduplicate(&emb, lo);
        let fine = deduplicate(&emb, hi);
        // Every fine cluster lies inside one coarse cluster.
        let owner: BTreeMap<&str, usize> = coarse
            .clusters
            .iter()
            .enumerate()
            .flat_map(|(c, cl)| cl.members.iter().map(move |m| (m.as_str(), c)))
            .collect();
        for cl in &fine.clusters {
            let owners: BTreeSet<Option<&usize>> = cl.members.iter().map(|m| owner.get(m.as_str())).collect();
            prop_assert_eq!(owners.len(), 1);
            prop_assert!(owners.iter().next().unwrap().is_some());
        }
        prop_assert!(fine.dropped.len() <= coarse.dropped.len());
    }
}

// ---------- reliability ----------

/// Kappa from an explicit contingency table.
fn kappa_from_table(table: &[Vec<f64>]) -> Option<f64> {
    let n: f64 = table.iter().flatten().sum();
    let c = table.len();
    let po: f64 = (0..c).map(|i| table[i][i]).sum::<f64>() / n;
    let pe: f64 = (0..c)
        .map(|i| {
            let row: f64 = table[i].iter().sum();
            let col: f64 = table.iter().map(|r| r[i]).sum();
            row * col / (n * n)
        })
        .sum();
    (pe < 1.0).then(|| (po - pe) / (1.0 - pe))
}

fn pairs_from_table(table: &[Vec<f64>]) -> Vec<(u8, u8)> {
    let mut out = Vec::new();
    for (a, row) in table.iter().enumerate() {
        for (b, &n) in row.iter().enumerate() {
            out.extend(std::iter::repeat_n((a as u8, b as u8), n as usize));
        }
    }
    out
}

#[test]
fn kappa_hand_table() {
    let table = vec![vec![20.0, 5.0], vec![10.0, 15.0]];
    let k = cohen_kappa(&pairs_from_table(&table), 2).unwrap().unwrap();
    assert!((k - 0.4).abs() < 1e-9);
    let perfect = vec![vec![7.0, 0.0, 0.0, 0.0], vec![0.0, 3.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 9.0]];
    assert_eq!(cohen_kappa(&pairs_from_table(&perfect), 4).unwrap(), Some(1.0));
}

proptest! {
    #[test]
    fn kappa_matches_table_oracle(cells in prop::collection::vec(0u8..6, 16)) {
        let table: Vec<Vec<f64>> = cells.chunks(4).map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let pairs = pairs_from_table(&table);
        prop_assume!(!pairs.is_empty());
        let k = cohen_kappa(&pairs, 4).unwrap();
        let want = kappa_from_table(&table);
        prop_assert_eq!(k.is_some(), want.is_some());
        if let (Some(k), Some(w)) = (k, want) {
            prop_assert!((k - w).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&k));
            let perfect = pairs.iter().all(|(a, b)| a == b);
            prop_assert_eq!(perfect, (k - 1.0).abs() < 1e-12);
        }
    }
}

/// Sums-of-squares decomposition written out cell by cell.
fn icc_oracle(groups: &[Vec<f64>]) -> f64 {
    let cells: Vec<(usize, f64)> = groups.iter().enumerate().flat_map(|(g, v)| v.iter().map(move |&x| (g, x))).collect();
    let n_total = cells.len() as f64;
    let n_targets = groups.len() as f64;
    let grand = cells.iter().map(|c| c.1).sum::<f64>() / n_total;
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let ss_total: f64 = cells.iter().map(|&(_, x)| (x - grand).powi(2)).sum();
    let ss_within: f64 = cells.iter().map(|&(g, x)| (x - means[g]).powi(2)).sum();
    let ss_between = ss_total - ss_within;
    let ms_b = ss_between / (n_targets - 1.0);
    let ms_w = ss_within / (n_total - n_targets);
    let sum_sq: f64 = groups.iter().map(|g| (g.len() * g.len()) as f64).sum();
    let k0 = (n_total - sum_sq / n_total) / (n_targets - 1.0);
    (ms_b - ms_w) / (ms_b + (k0 - 1.0) * ms_w)
}

#[test]
fn icc_fixtures_match_sums_of_squares() {
    let two_raters = vec![
        vec![3.0, 3.0],
        vec![0.0, 1.0],
        vec![2.0, 3.0],
        vec![0.0, 0.0],
        vec![1.0, 2.0],
        vec![3.0, 2.0],
    ];
    let got = icc1(&two_raters).unwrap().unwrap();
    assert!((got - icc_oracle(&two_raters)).abs() < 1e-9);

    let unbalanced = vec![vec![3.0, 3.0, 2.0], vec![0.0, 1.0], vec![1.0, 1.0, 0.0, 1.0], vec![2.0, 3.0]];
    let got = icc1(&unbalanced).unwrap().unwrap();
    assert!((got - icc_oracle(&unbalanced)).abs() < 1e-9);

    let no_between = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
    let got = icc1(&no_between).unwrap().unwrap();
    assert!((got - icc_oracle(&no_between)).abs() < 1e-9);
    assert!((got + 1.0).abs() < 1e-12);
}

#[test]
fn icc_textbook_example() {
    // Six targets rated by four judges; the one-way ICC of this classic table is 0.1657.
    let table = vec![
        vec![9.0, 2.0, 5.0, 8.0],
        vec![6.0, 1.0, 3.0, 2.0],
        vec![8.0, 4.0, 6.0, 8.0],
        vec![7.0, 1.0, 2.0, 6.0],
        vec![10.0, 5.0, 6.0, 9.0],
        vec![6.0, 2.0, 4.0, 7.0],
    ];
    let got = icc1(&table).unwrap().unwrap();
    assert!((got - 0.1657).abs() < 1e-4);
    assert!((got - icc_oracle(&table)).abs() < 1e-12);
}

// ---------- stratified split ----------

fn manifest(seed: u64) -> Vec<SplitItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    for c in 0..10 {
        for label in [false, true] {
            let n = rng.random_range(1..60);
            for i in 0..n {
                items.push(SplitItem {
                    image_id: format!("c{c}-{}-{i}", u8::from(label)),
                    country: format!("C{c}"),
                    label,
                });
            }
        }
    }
    items
}

#[test]
fn split_is_a_stratified_partition() {
    let items = manifest(1);
    for seed in 0..50 {
        let s = split_train_test(&items, 0.8, seed).unwrap();
        assert_eq!(s, split_train_test(&items, 0.8, seed).unwrap());
        let train: BTreeSet<&str> = s.train.iter().map(String::as_str).collect();
        let test: BTreeSet<&str> = s.test.iter().map(String::as_str).collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), items.len());
        let mut strata: BTreeMap<(&str, bool), (usize, usize)> = BTreeMap::new();
        for it in &items {
            let e = strata.entry((&it.country, it.label)).or_default();
            e.0 += 1;
            e.1 += usize::from(train.contains(it.image_id.as_str()));
        }
        for ((c, l), (n, t)) in strata {
            assert!((t as f64 - 0.8 * n as f64).abs() <= 1.0, "{c}/{l}: {t} of {n}");
        }
    }
    let a = split_train_test(&items, 0.8, 1).unwrap();
    let b = split_train_test(&items, 0.8, 2).unwrap();
    assert_ne!(a, b);
}

#[test]
fn split_arithmetic_example() {
    let mut items = Vec::new();
    for i in 0..100 {
        items.push(SplitItem {
            image_id: format!("x{i:03}"),
            country: "X".into(),
            label: i < 20,
        });
    }
    let s = split_train_test(&items, 0.8, 5).unwrap();
    let pos = |ids: &[String]| ids.iter().filter(|id| id[1..].parse::<usize>().unwrap() < 20).count();
    assert_eq!((s.train.len() - pos(&s.train), pos(&s.train)), (64, 16));
    assert_eq!((s.test.len() - pos(&s.test), pos(&s.test)), (16, 4));
}

// ---------- weighted-bin sampling ----------

#[test]
fn two_bins_receive_equal_mass() {
    let mut pool: Vec<(String, f64)> = (0..9).map(|i| (format!("a{i}"), 0.1 + 0.004 * i as f64)).collect();
    pool.push(("b".into(), 0.73));
    let mut hits = 0usize;
    let draws = 10_000;
    for seed in 0..draws {
        let plan = weighted_sample(&pool, 1, seed).unwrap();
        if plan.drawn[0] == "b" {
            hits += 1;
        }
    }
    let freq = hits as f64 / draws as f64;
    assert!((freq - 0.5).abs() <= 0.02, "singleton bin drawn with frequency {freq}");
}

#[test]
fn bin_frequencies_pass_chi_square() {
    // Four nonempty bins of very different sizes.
    let mut pool = Vec::new();
    for (b, n) in [(0usize, 30usize), (5, 3), (12, 12), (19, 1)] {
        for i in 0..n {
            pool.push((format!("b{b}-{i}"), b as f64 / N_BINS as f64 + 0.01));
        }
    }
    let draws = 4000;
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for seed in 0..draws {
        let plan = weighted_sample(&pool, 1, seed).unwrap();
        let e = plan.entries.iter().find(|e| e.drawn).unwrap();
        *counts.entry(e.bin.unwrap()).or_default() += 1.0;
    }
    let expected = draws as f64 / 4.0;
    let chi2: f64 = counts.values().map(|&o| (o - expected).powi(2) / expected).sum();
    assert_eq!(counts.len(), 4);
    // 99.9th percentile of chi-square with 3 degrees of freedom.
    assert!(chi2 < 16.27, "chi-square {chi2}");
}

proptest! {
    #[test]
    fn plan_invariants(scores in prop::collection::vec(0.0f64..=1.0, 1..60), frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let pool: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, &s)| (format!("p{i}"), s)).collect();
        let m = (frac * pool.len() as f64) as usize;
        let plan = weighted_sample(&pool, m, seed).unwrap();
        let total: f64 = plan.entries.iter().map(|e| e.weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(plan.entries.iter().all(|e| e.weight > 0.0));
        prop_assert_eq!(plan.drawn.len(), m);
        let distinct: BTreeSet<&String> = plan.drawn.iter().collect();
        prop_assert_eq!(distinct.len(), m);
        // Bins partition the pool with equal mass per nonempty bin.
        let mut mass: BTreeMap<usize, f64> = BTreeMap::new();
        for e in &plan.entries {
            prop_assert_eq!(e.bin, Some(bin_of(e.score.unwrap())));
            *mass.entry(e.bin.unwrap()).or_default() += e.weight;
        }
        for &v in mass.values() {
            prop_assert!((v - 1.0 / mass.len() as f64).abs() < 1e-9);
        }
        prop_assert_eq!(plan.replay().unwrap(), plan);
    }

    #[test]
    fn uniform_exhaustion(n in 1usize..40, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
        let plan = uniform_sample(&ids, n, seed).unwrap();
        let drawn: BTreeSet<&String> = plan.drawn.iter().collect();
        prop_assert_eq!(drawn.len(), n);
        prop_assert!(uniform_sample(&ids, n + 1, seed).is_err());
    }
}

// ---------- k-means ----------

#[test]
fn kmeans_recovers_two_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let centres = [[0.0, 0.0, 0.0], [25.0, -20.0, 10.0]];
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for _ in 0..1000 {
        let g = usize::from(rng.random_bool(0.4));
        rows.push(centres[g].iter().map(|c| c + normal.sample(&mut rng)).collect::<Vec<f64>>());
        truth.push(g);
    }
    let emb = embeddings(&rows);
    for seed in 0..5 {
        let res = kmeans(&emb, &KMeansOptions::new(2, seed)).unwrap();
        assert!(res.converged);
        for w in res.inertia_history.windows(2) {
            assert!(w[1] <= w[0], "inertia rose from {} to {}", w[0], w[1]);
        }
        // Clusters may be labelled either way round.
        let flip = res.assignment[0] != truth[0];
        for (a, &t) in res.assignment.iter().zip(&truth) {
            assert_eq!(*a, if flip { 1 - t } else { t });
        }
        for g in 0..2 {
            let members: Vec<&Vec<f64>> = rows.iter().zip(&truth).filter(|(_, &t)| t == g).map(|(r, _)| r).collect();
            let mut mean = vec![0.0; 3];
            for r in &members {
                for (m, v) in mean.iter_mut().zip(r.iter()) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= members.len() as f64);
            let c = if flip { 1 - g } else { g };
            assert_eq!(res.centroids.row(c), mean.as_slice());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn kmeans_inertia_is_monotone(seed in any::<u64>(), k in 1usize..6) {
        let rows = clustered_vectors(seed, 50);
        let res = kmeans(&embeddings(&rows), &KMeansOptions::new(k, seed)).unwrap();
        for w in res.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        // Every point sits at its nearest centroid.
        for (i, &a) in res.assignment.iter().enumerate() {
            let d = |c: usize| rows[i].iter().zip(res.centroids.row(c)).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            for c in 0..k {
                prop_assert!(d(a) <= d(c));
            }
        }
    }
}
