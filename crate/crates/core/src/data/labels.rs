use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_line, open};
use crate::error::{Error, Result};

/// Four-point annotation scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    NoProtestHigh = 0,
    NoProtestLow = 1,
    ProtestLow = 2,
    ProtestHigh = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::NoProtestHigh,
        Label::NoProtestLow,
        Label::ProtestLow,
        Label::ProtestHigh,
    ];

    pub fn is_protest(self) -> bool {
        matches!(self, Label::ProtestLow | Label::ProtestHigh)
    }

    pub fn ordinal(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Label::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| format!("label {v} outside 0..=3"))
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.ordinal()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub image_id: String,
    pub coder_id: String,
    pub round: u32,
    pub label: Label,
}

#[derive(Deserialize)]
struct RawLabel {
    image_id: String,
    coder_id: String,
    round: i64,
    label: i64,
}

pub fn read_labels<R: Read>(reader: R) -> Result<Vec<LabelRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.deserialize::<RawLabel>() {
        let rec = rec.map_err(|e| Error::Malformed {
            line: csv_line(&e),
            message: e.to_string(),
        })?;
        let line = out.len() + 2;
        if rec.round < 1 || rec.round > u32::MAX as i64 {
            return Err(Error::OutOfRange {
                line,
                field: "round",
                value: rec.round.to_string(),
            });
        }
        let label = u8::try_from(rec.label)
            .ok()
            .and_then(|l| Label::try_from(l).ok())
            .ok_or_else(|| Error::OutOfRange {
                line,
                field: "label",
                value: rec.label.to_string(),
            })?;
        if !seen.insert((rec.image_id.clone(), rec.coder_id.clone())) {
            return Err(Error::Duplicate {
                line,
                what: "(image_id, coder_id)",
                id: format!("{},{}", rec.image_id, rec.coder_id),
            });
        }
        out.push(LabelRecord {
            image_id: rec.image_id,
            coder_id: rec.coder_id,
            round: rec.round as u32,
            label,
        });
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    read_labels(open(path)?)
}

pub fn write_labels(path: &Path, labels: &[LabelRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Computation(e.to_string()))?;
    w.write_record(["image_id", "coder_id", "round", "label"])
        .and_then(|_| {
            labels.iter().try_for_each(|l| {
                w.write_record([
                    l.image_id.as_str(),
                    l.coder_id.as_str(),
                    &l.round.to_string(),
                    &l.label.ordinal().to_string(),
                ])
            })
        })
        .map_err(|e| Error::Computation(e.to_string()))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Collapses all labels of each image to one binary target: majority vote of
/// the binary-collapsed labels; a tie takes the label of the lowest coder id.
pub fn binary_targets(labels: &[LabelRecord]) -> BTreeMap<String, bool> {
    let mut by_image: BTreeMap<&str, Vec<&LabelRecord>> = BTreeMap::new();
    for l in labels {
        by_image.entry(&l.image_id).or_default().push(l);
    }
    by_image
        .into_iter()
        .map(|(id, mut ls)| {
            ls.sort_by(|a, b| a.coder_id.cmp(&b.coder_id));
            let protest = ls.iter().filter(|l| l.label.is_protest()).count();
            let target = match (2 * protest).cmp(&ls.len()) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => ls[0].label.is_protest(),
            };
            (id.to_string(), target)
        })
        .collect()
}
