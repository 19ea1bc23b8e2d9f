use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::TrainedModel;
use crate::matrix::Matrix;

pub const ALL_GROUP: &str = "all";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn from_predictions(truth: &[bool], predicted: &[bool]) -> Self {
        let mut c = ConfusionCounts::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            c.record(t, p);
        }
        c
    }

    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&mut self, o: &ConfusionCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }

    fn ratio(num: u64, den: u64) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    /// Undefined when either side is undefined or both are zero.
    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub group: String,
    pub counts: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn metrics(counts: ConfusionCounts) -> EvalReport {
    metrics_for(ALL_GROUP, counts)
}

fn metrics_for(group: &str, counts: ConfusionCounts) -> EvalReport {
    EvalReport {
        group: group.to_string(),
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
    }
}

/// One report per distinct group key (sorted), followed by the pooled `all`
/// report.
pub fn evaluate_grouped(model: &TrainedModel, x: &Matrix, y: &[bool], groups: &[String]) -> Result<Vec<EvalReport>> {
    if y.len() != x.rows() || groups.len() != x.rows() {
        return Err(Error::InvalidInput(format!(
            "{} rows, {} labels, {} group keys",
            x.rows(),
            y.len(),
            groups.len()
        )));
    }
    let predicted = model.predict(x)?;
    let mut by_group: BTreeMap<&str, ConfusionCounts> = BTreeMap::new();
    let mut all = ConfusionCounts::default();
    for i in 0..y.len() {
        by_group.entry(&groups[i]).or_default().record(y[i], predicted[i]);
        all.record(y[i], predicted[i]);
    }
    let mut out: Vec<EvalReport> = by_group.into_iter().map(|(g, c)| metrics_for(g, c)).collect();
    out.push(metrics_for(ALL_GROUP, all));
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// CSV `group,tp,fp,tn,fn,precision,recall,f1`; undefined metrics are empty.
pub fn write_reports_csv<W: Write>(writer: W, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let res = w
        .write_record(["group", "tp", "fp", "tn", "fn", "precision", "recall", "f1"])
        .and_then(|_| {
            reports.iter().try_for_each(|r| {
                let c = r.counts;
                w.write_record([
                    r.group.clone(),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.tn.to_string(),
                    c.fn_.to_string(),
                    opt(r.precision),
                    opt(r.recall),
                    opt(r.f1),
                ])
            })
        })
        .and_then(|_| w.flush().map_err(csv::Error::from));
    res.map_err(|e| Error::Computation(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{train, Hyperparams, TreeParams};
    use proptest::prelude::*;

    fn close(a: Option<f64>, b: f64) -> bool {
        a.is_some_and(|a| (a - b).abs() <= 5e-5)
    }

    #[test]
    fn cluster_rows() {
        let r = metrics(ConfusionCounts::new(714, 38, 14, 58));
        assert!(close(r.precision, 0.9495) && close(r.recall, 0.9249) && close(r.f1, 0.9370));
        let r = metrics(ConfusionCounts::new(31, 44, 1884, 67));
        assert!(close(r.precision, 0.4133) && close(r.recall, 0.3163) && close(r.f1, 0.3584));
    }

    #[test]
    fn undefined_cases() {
        let r = metrics(ConfusionCounts::new(0, 0, 10, 3));
        assert_eq!(r.precision, None);
        assert_eq!(r.f1, None);
        // 406 true negatives, 1 false negative, 7 false positives, no true positive.
        let r = metrics(ConfusionCounts::new(0, 7, 406, 1));
        assert_eq!((r.precision, r.recall, r.f1), (Some(0.0), Some(0.0), None));
        // 1 true positive, 10 false positives, 7 false negatives.
        let r = metrics(ConfusionCounts::new(1, 10, 450, 7));
        assert!(close(r.precision, 0.0909) && close(r.recall, 0.1250) && close(r.f1, 0.1053));
    }

    fn fixture() -> (TrainedModel, Matrix, Vec<bool>, Vec<String>) {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 10) as f64, (i % 4) as f64]).collect();
        let y: Vec<bool> = (0..30).map(|i| i % 10 > 6 || i % 7 == 0).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = train(&x, &y, &Hyperparams::Tree(TreeParams { max_depth: 2, min_samples_leaf: 1 })).unwrap();
        let groups = (0..30).map(|i| format!("c{}", i % 3)).collect();
        (m, x, y, groups)
    }

    #[test]
    fn single_group_equals_all() {
        let (m, x, y, _) = fixture();
        let reports = evaluate_grouped(&m, &x, &y, &vec!["only".to_string(); 30]).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].counts, reports[1].counts);
        assert_eq!(reports[1].group, ALL_GROUP);
    }

    #[test]
    fn groups_match_direct_subset_metrics() {
        let (m, x, y, groups) = fixture();
        let reports = evaluate_grouped(&m, &x, &y, &groups).unwrap();
        let mut pooled = ConfusionCounts::default();
        for r in &reports[..reports.len() - 1] {
            let idx: Vec<usize> = (0..30).filter(|&i| groups[i] == r.group).collect();
            let sub = x.select_rows(&idx);
            let truth: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
            let pred: Vec<bool> = sub.row_iter().map(|row| m.predict_proba_row(row) >= 0.5).collect();
            assert_eq!(r.counts, ConfusionCounts::from_predictions(&truth, &pred));
            pooled.merge(&r.counts);
        }
        assert_eq!(pooled, reports.last().unwrap().counts);
    }

    #[test]
    fn misaligned_groups() {
        let (m, x, y, _) = fixture();
        assert!(evaluate_grouped(&m, &x, &y, &["a".to_string()]).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &[metrics(ConfusionCounts::new(0, 0, 4, 0))]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "group,tp,fp,tn,fn,precision,recall,f1\nall,0,0,4,0,,,\n");
    }

    proptest! {
        #[test]
        fn f1_is_harmonic_mean(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
            let c = ConfusionCounts::new(tp, fp, tn, fn_);
            prop_assert_eq!(c.total(), tp + fp + tn + fn_);
            if let Some(f1) = c.f1() {
                let (p, r) = (c.precision().unwrap(), c.recall().unwrap());
                prop_assert!((f1 * (p + r) - 2.0 * p * r).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&f1));
            }
        }
    }
}
