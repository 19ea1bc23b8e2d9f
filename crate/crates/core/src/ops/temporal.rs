//! Daily segment counts per country and category.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::ImageSegments;
use crate::error::{Error, Result};
use crate::featurize::FeaturizeConfig;

pub const TOP_N: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemporalRow {
    pub country: String,
    pub date: NaiveDate,
    pub category: String,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalReport {
    /// Sorted by (country, date, category).
    pub rows: Vec<TemporalRow>,
}

impl TemporalReport {
    fn from_map(map: BTreeMap<(String, NaiveDate, String), u64>) -> Self {
        TemporalReport {
            rows: map
                .into_iter()
                .map(|((country, date, category), count)| TemporalRow {
                    country,
                    date,
                    category,
                    count,
                })
                .collect(),
        }
    }

    fn to_map(&self) -> BTreeMap<(String, NaiveDate, String), u64> {
        self.rows
            .iter()
            .map(|r| ((r.country.clone(), r.date, r.category.clone()), r.count))
            .collect()
    }

    /// Sums two reports cell by cell.
    pub fn merge(&self, other: &TemporalReport) -> TemporalReport {
        let mut map = self.to_map();
        for r in &other.rows {
            *map.entry((r.country.clone(), r.date, r.category.clone())).or_default() += r.count;
        }
        TemporalReport::from_map(map)
    }

    /// Most frequent categories per country over the whole period, ties
    /// broken alphabetically.
    pub fn top_categories(&self, n: usize) -> BTreeMap<String, Vec<(String, u64)>> {
        let mut totals: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
        for r in &self.rows {
            *totals.entry(&r.country).or_default().entry(&r.category).or_default() += r.count;
        }
        totals
            .into_iter()
            .map(|(country, cats)| {
                let mut cats: Vec<(String, u64)> = cats.into_iter().map(|(c, n)| (c.to_string(), n)).collect();
                cats.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                cats.truncate(n);
                (country.to_string(), cats)
            })
            .collect()
    }

    /// Rows restricted to each country's top categories.
    pub fn top_rows(&self, n: usize) -> Vec<TemporalRow> {
        let top = self.top_categories(n);
        self.rows
            .iter()
            .filter(|r| top.get(&r.country).is_some_and(|t| t.iter().any(|(c, _)| *c == r.category)))
            .cloned()
            .collect()
    }

    /// CSV `country,date,category,count`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(writer, &self.rows)
    }

    /// CSV `country,rank,category,total`.
    pub fn write_top_csv<W: Write>(&self, writer: W, n: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut res = w.write_record(["country", "rank", "category", "total"]);
        for (country, cats) in self.top_categories(n) {
            for (rank, (cat, total)) in cats.iter().enumerate() {
                res = res.and_then(|_| {
                    w.write_record([country.clone(), (rank + 1).to_string(), cat.clone(), total.to_string()])
                });
            }
        }
        res.and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Computation(e.to_string()))
    }
}

pub fn write_rows<W: Write>(writer: W, rows: &[TemporalRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut res = w.write_record(["country", "date", "category", "count"]);
    for r in rows {
        res = res.and_then(|_| {
            w.write_record([
                r.country.clone(),
                r.date.format("%Y-%m-%d").to_string(),
                r.category.clone(),
                r.count.to_string(),
            ])
        });
    }
    res.and_then(|_| w.flush().map_err(csv::Error::from))
        .map_err(|e| Error::Computation(e.to_string()))
}

/// Counts retained segment instances per (country, UTC date, category).
/// Images without a timestamp are skipped.
pub fn temporal_counts(images: &[ImageSegments], cfg: &FeaturizeConfig) -> TemporalReport {
    let mut map: BTreeMap<(String, NaiveDate, String), u64> = BTreeMap::new();
    for img in images {
        let Some(ts) = img.timestamp else { continue };
        let date = ts.date_naive();
        for s in img.segments.iter().filter(|s| cfg.keeps(s.score)) {
            *map.entry((img.country.clone(), date, s.category.clone())).or_default() += 1;
        }
    }
    TemporalReport::from_map(map)
}
