//! Inter-rater reliability: Cohen's kappa on paired ratings and the one-way
//! intraclass correlation ICC(1).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::LabelRecord;
use crate::error::{Error, Result};

/// `(p_o - p_e) / (1 - p_e)`; `None` when `p_e = 1`.
pub fn cohen_kappa(pairs: &[(u8, u8)], n_classes: usize) -> Result<Option<f64>> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no rating pairs".into()));
    }
    let mut a = vec![0.0; n_classes];
    let mut b = vec![0.0; n_classes];
    let mut agree = 0.0;
    for &(ra, rb) in pairs {
        if ra as usize >= n_classes || rb as usize >= n_classes {
            return Err(Error::InvalidInput(format!(
                "rating pair ({ra}, {rb}) outside 0..{n_classes}"
            )));
        }
        a[ra as usize] += 1.0;
        b[rb as usize] += 1.0;
        if ra == rb {
            agree += 1.0;
        }
    }
    let n = pairs.len() as f64;
    let po = agree / n;
    let pe: f64 = a.iter().zip(&b).map(|(x, y)| (x / n) * (y / n)).sum();
    if pe >= 1.0 {
        return Ok(None);
    }
    Ok(Some((po - pe) / (1.0 - pe)))
}

/// One-way random-effects ICC(1) with images as targets. Targets with fewer
/// than two ratings are ignored. Unequal group sizes use
/// `k = (N - sum n_i^2 / N) / (n_targets - 1)`.
/// `None` when the ratio is undefined (no variance at all).
pub fn icc1<R: AsRef<[f64]>>(targets: &[R]) -> Result<Option<f64>> {
    let groups: Vec<&[f64]> = targets.iter().map(|t| t.as_ref()).filter(|t| t.len() >= 2).collect();
    if groups.len() < 2 {
        return Err(Error::InvalidInput(
            "ICC needs at least two targets with two or more ratings".into(),
        ));
    }
    let n_targets = groups.len() as f64;
    let total: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / total;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in &groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let ms_between = ss_between / (n_targets - 1.0);
    let ms_within = ss_within / (total - n_targets);
    let sum_sq: f64 = groups.iter().map(|g| (g.len() as f64).powi(2)).sum();
    let k = (total - sum_sq / total) / (n_targets - 1.0);
    let denom = ms_between + (k - 1.0) * ms_within;
    if denom == 0.0 {
        return Ok(None);
    }
    Ok(Some((ms_between - ms_within) / denom))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub kappa_4: Option<f64>,
    pub kappa_2: Option<f64>,
    pub icc1_4: Option<f64>,
    pub icc1_2: Option<f64>,
    /// Images with at least two annotations.
    pub n_double: usize,
}

impl ReliabilityReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let f = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["kappa_4", "kappa_2", "icc1_4", "icc1_2", "n_double"])
            .and_then(|_| {
                w.write_record([
                    f(self.kappa_4),
                    f(self.kappa_2),
                    f(self.icc1_4),
                    f(self.icc1_2),
                    self.n_double.to_string(),
                ])
            })
            .and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Computation(e.to_string()))
    }
}

/// Kappa pairs the first two annotations of each image by ascending coder id;
/// ICC uses every annotation of multiply-annotated images. Labels are coded
/// 0..=3, and 0/1 after the binary collapse.
pub fn reliability_report(labels: &[LabelRecord]) -> Result<ReliabilityReport> {
    let mut by_image: BTreeMap<&str, Vec<&LabelRecord>> = BTreeMap::new();
    for l in labels {
        by_image.entry(&l.image_id).or_default().push(l);
    }
    let mut pairs4 = Vec::new();
    let mut pairs2 = Vec::new();
    let mut ratings4: Vec<Vec<f64>> = Vec::new();
    let mut ratings2: Vec<Vec<f64>> = Vec::new();
    for ls in by_image.values_mut() {
        if ls.len() < 2 {
            continue;
        }
        ls.sort_by(|a, b| a.coder_id.cmp(&b.coder_id));
        let (a, b) = (ls[0].label, ls[1].label);
        pairs4.push((a.ordinal(), b.ordinal()));
        pairs2.push((u8::from(a.is_protest()), u8::from(b.is_protest())));
        ratings4.push(ls.iter().map(|l| l.label.ordinal() as f64).collect());
        ratings2.push(ls.iter().map(|l| if l.label.is_protest() { 1.0 } else { 0.0 }).collect());
    }
    if pairs4.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "reliability needs at least two doubly-annotated images, found {}",
            pairs4.len()
        )));
    }
    Ok(ReliabilityReport {
        kappa_4: cohen_kappa(&pairs4, 4)?,
        kappa_2: cohen_kappa(&pairs2, 2)?,
        icc1_4: icc1(&ratings4)?,
        icc1_2: icc1(&ratings2)?,
        n_double: pairs4.len(),
    })
}
