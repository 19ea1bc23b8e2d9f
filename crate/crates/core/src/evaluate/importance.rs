use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::ConfusionCounts;
use crate::error::{Error, Result};
use crate::learners::TrainedModel;
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceOptions {
    pub repeats: usize,
    pub seed: u64,
    /// Restrict to these feature indices; all features when `None`.
    pub features: Option<Vec<usize>>,
}

impl ImportanceOptions {
    pub fn new(seed: u64) -> Self {
        ImportanceOptions {
            repeats: 5,
            seed,
            features: None,
        }
    }
}

/// F1 drops per (country, feature), their unweighted mean over countries,
/// and each country's deviation from that mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<usize>,
    pub categories: Vec<String>,
    pub countries: Vec<String>,
    /// Unpermuted F1 per country (undefined counted as 0).
    pub baseline_f1: Vec<f64>,
    /// `country_drop[c][f]`
    pub country_drop: Vec<Vec<f64>>,
    pub mean_drop: Vec<f64>,
    /// `deviation[c][f] = country_drop[c][f] - mean_drop[f]`
    pub deviation: Vec<Vec<f64>>,
}

fn f1_or_zero(truth: &[bool], x: &Matrix, model: &TrainedModel) -> f64 {
    let pred: Vec<bool> = x.row_iter().map(|r| model.predict_proba_row(r) >= 0.5).collect();
    ConfusionCounts::from_predictions(truth, &pred).f1().unwrap_or(0.0)
}

/// Permutation importance computed separately inside each country group.
/// The permutation stream for (country `c`, feature `j`) is derived from
/// `seed` and `(c, j)`; repeats draw from it sequentially.
pub fn permutation_importance(
    model: &TrainedModel,
    x: &Matrix,
    y: &[bool],
    groups: &[String],
    columns: &[String],
    opts: &ImportanceOptions,
) -> Result<ImportanceReport> {
    if y.len() != x.rows() || groups.len() != x.rows() {
        return Err(Error::InvalidInput(format!(
            "{} rows, {} labels, {} group keys",
            x.rows(),
            y.len(),
            groups.len()
        )));
    }
    if x.cols() != model.feature_count || columns.len() != x.cols() {
        return Err(Error::InvalidInput(format!(
            "model expects {} features; matrix has {}, {} column names",
            model.feature_count,
            x.cols(),
            columns.len()
        )));
    }
    if opts.repeats == 0 {
        return Err(Error::InvalidParams("repeats must be >= 1".into()));
    }
    let features: Vec<usize> = match &opts.features {
        Some(f) => {
            if let Some(&bad) = f.iter().find(|&&j| j >= x.cols()) {
                return Err(Error::InvalidParams(format!("feature index {bad} out of range")));
            }
            f.clone()
        }
        None => (0..x.cols()).collect(),
    };

    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g).or_default().push(i);
    }
    let countries: Vec<String> = members.keys().map(|s| s.to_string()).collect();

    let mut baseline_f1 = Vec::with_capacity(countries.len());
    let mut country_drop = Vec::with_capacity(countries.len());
    for (ci, idx) in members.values().enumerate() {
        let gx = x.select_rows(idx);
        let gy: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
        let base = f1_or_zero(&gy, &gx, model);
        let drops: Vec<f64> = features
            .par_iter()
            .map_init(
                || gx.clone(),
                |work, &j| {
                    let original: Vec<f64> = gx.column(j).collect();
                    let mut rng = seed::derived_rng(opts.seed, &[ci as u64, j as u64]);
                    let mut values = original.clone();
                    let mut total = 0.0;
                    for _ in 0..opts.repeats {
                        values.copy_from_slice(&original);
                        values.shuffle(&mut rng);
                        for (r, v) in values.iter().enumerate() {
                            work.set(r, j, *v);
                        }
                        total += f1_or_zero(&gy, work, model);
                    }
                    for (r, v) in original.iter().enumerate() {
                        work.set(r, j, *v);
                    }
                    base - total / opts.repeats as f64
                },
            )
            .collect();
        baseline_f1.push(base);
        country_drop.push(drops);
    }

    let nc = countries.len().max(1) as f64;
    let mean_drop: Vec<f64> = (0..features.len())
        .map(|f| country_drop.iter().map(|d| d[f]).sum::<f64>() / nc)
        .collect();
    let deviation = country_drop
        .iter()
        .map(|d| d.iter().zip(&mean_drop).map(|(a, m)| a - m).collect())
        .collect();
    Ok(ImportanceReport {
        categories: features.iter().map(|&j| columns[j].clone()).collect(),
        features,
        countries,
        baseline_f1,
        country_drop,
        mean_drop,
        deviation,
    })
}

impl ImportanceReport {
    /// Positions into `features`, by descending mean drop (ties by position).
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.features.len()).collect();
        order.sort_by(|&a, &b| self.mean_drop[b].total_cmp(&self.mean_drop[a]).then(a.cmp(&b)));
        order
    }

    /// Same as [`ranking`](Self::ranking) within one country.
    pub fn country_ranking(&self, country: usize) -> Vec<usize> {
        let d = &self.country_drop[country];
        let mut order: Vec<usize> = (0..self.features.len()).collect();
        order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
        order
    }

    /// CSV `country,category,drop,deviation`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut res = w.write_record(["country", "category", "drop", "deviation"]);
        for (c, country) in self.countries.iter().enumerate() {
            for f in 0..self.features.len() {
                res = res.and_then(|_| {
                    w.write_record([
                        country.clone(),
                        self.categories[f].clone(),
                        self.country_drop[c][f].to_string(),
                        self.deviation[c][f].to_string(),
                    ])
                });
            }
        }
        res.and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Computation(e.to_string()))
    }

    /// CSV `category,mean_drop`, highest drop first.
    pub fn write_mean_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut res = w.write_record(["category", "mean_drop"]);
        for f in self.ranking() {
            res = res.and_then(|_| w.write_record([self.categories[f].clone(), self.mean_drop[f].to_string()]));
        }
        res.and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Computation(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{train, Hyperparams, TreeParams};

    fn fixture() -> (TrainedModel, Matrix, Vec<bool>, Vec<String>, Vec<String>) {
        // Feature 0 decides the label, feature 1 is noise, feature 2 constant.
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|i| vec![((i * 37) % 11) as f64, ((i * 13) % 7) as f64, 1.0])
            .collect();
        let y: Vec<bool> = rows.iter().map(|r| r[0] >= 6.0).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = train(&x, &y, &Hyperparams::Tree(TreeParams { max_depth: 1, min_samples_leaf: 1 })).unwrap();
        let groups = (0..80).map(|i| ["AR", "CL"][i % 2].to_string()).collect();
        let cols = ["a", "b", "c"].map(String::from).to_vec();
        (m, x, y, groups, cols)
    }

    #[test]
    fn unused_and_constant_features_have_zero_drop() {
        let (m, x, y, groups, cols) = fixture();
        let r = permutation_importance(&m, &x, &y, &groups, &cols, &ImportanceOptions::new(5)).unwrap();
        assert_eq!(r.ranking()[0], 0);
        assert!(r.mean_drop[0] > 0.1);
        for c in 0..2 {
            assert_eq!(r.country_drop[c][1], 0.0);
            assert_eq!(r.country_drop[c][2], 0.0);
        }
    }

    #[test]
    fn deviations_average_to_zero() {
        let (m, x, y, groups, cols) = fixture();
        let r = permutation_importance(&m, &x, &y, &groups, &cols, &ImportanceOptions::new(9)).unwrap();
        for f in 0..3 {
            let s: f64 = r.deviation.iter().map(|d| d[f]).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn single_country_has_no_deviation() {
        let (m, x, y, _, cols) = fixture();
        let groups = vec!["RU".to_string(); 80];
        let r = permutation_importance(&m, &x, &y, &groups, &cols, &ImportanceOptions::new(1)).unwrap();
        assert!(r.deviation[0].iter().all(|&d| d == 0.0));
    }

    #[test]
    fn seeded_determinism() {
        let (m, x, y, groups, cols) = fixture();
        let opts = ImportanceOptions::new(42);
        let a = permutation_importance(&m, &x, &y, &groups, &cols, &opts).unwrap();
        let b = permutation_importance(&m, &x, &y, &groups, &cols, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn feature_subset() {
        let (m, x, y, groups, cols) = fixture();
        let opts = ImportanceOptions {
            features: Some(vec![2, 0]),
            ..ImportanceOptions::new(1)
        };
        let r = permutation_importance(&m, &x, &y, &groups, &cols, &opts).unwrap();
        assert_eq!(r.categories, ["c", "a"]);
        assert_eq!(r.ranking(), [1, 0]);
    }
}
