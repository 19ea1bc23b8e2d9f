use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{open, Vocabulary};
use crate::error::{Error, Result};

/// One detected object instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub category: String,
    /// Detector confidence in `[0, 1]`.
    pub score: f64,
    /// Fraction of the image covered by the mask, in `[0, 1]`.
    pub area: f64,
    /// Outline in normalized image coordinates; display only.
    #[serde(default)]
    pub polygon: Option<Vec<[f64; 2]>>,
}

impl SegmentRecord {
    pub fn new(category: impl Into<String>, score: f64, area: f64) -> Self {
        SegmentRecord {
            category: category.into(),
            score,
            area,
            polygon: None,
        }
    }
}

/// All segments detected on one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSegments {
    pub image_id: String,
    pub country: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
    pub vocabulary: String,
    #[serde(default)]
    pub image_uri: Option<String>,
    #[serde(default)]
    pub segments: Vec<SegmentRecord>,
}

impl ImageSegments {
    pub fn new(image_id: impl Into<String>, country: impl Into<String>, vocabulary: &Vocabulary) -> Self {
        ImageSegments {
            image_id: image_id.into(),
            country: country.into(),
            timestamp: None,
            vocabulary: vocabulary.name().to_string(),
            image_uri: None,
            segments: Vec::new(),
        }
    }

    /// Checks every invariant of the record against `vocab`. `line` is only
    /// used for error reporting.
    pub fn validate(&self, vocab: &Vocabulary, line: usize) -> Result<()> {
        if self.image_id.is_empty() {
            return Err(Error::Malformed {
                line,
                message: "empty image_id".into(),
            });
        }
        if self.vocabulary != vocab.name() {
            return Err(Error::VocabularyMismatch {
                expected: vocab.name().to_string(),
                found: self.vocabulary.clone(),
            });
        }
        for s in &self.segments {
            if vocab.index_of(&s.category).is_none() {
                return Err(Error::UnknownCategory {
                    line,
                    category: s.category.clone(),
                    vocabulary: vocab.name().to_string(),
                });
            }
            check_unit(line, "score", s.score)?;
            check_unit(line, "area", s.area)?;
            if let Some(poly) = &s.polygon {
                for p in poly {
                    check_unit(line, "polygon", p[0])?;
                    check_unit(line, "polygon", p[1])?;
                }
            }
        }
        Ok(())
    }
}

fn check_unit(line: usize, field: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite { line });
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::OutOfRange {
            line,
            field,
            value: v.to_string(),
        });
    }
    Ok(())
}

/// Parses JSON Lines from `reader`, validating each record. Blank lines are
/// skipped; line numbers in errors are 1-based.
pub fn parse_segments<R: BufRead>(reader: R, vocab: &Vocabulary) -> Result<Vec<ImageSegments>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ImageSegments = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        rec.validate(vocab, lineno)?;
        if !seen.insert(rec.image_id.clone()) {
            return Err(Error::Duplicate {
                line: lineno,
                what: "image_id",
                id: rec.image_id,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_segments(path: &Path, vocab: &Vocabulary) -> Result<Vec<ImageSegments>> {
    parse_segments(open(path)?, vocab)
}

pub fn segments_to_jsonl(images: &[ImageSegments]) -> String {
    let mut s = String::new();
    for img in images {
        s.push_str(&serde_json::to_string(img).expect("segments serialize"));
        s.push('\n');
    }
    s
}

pub fn write_segments(path: &Path, images: &[ImageSegments]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(segments_to_jsonl(images).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coco() -> Vocabulary {
        Vocabulary::coco()
    }

    const TWO: &str = r#"{"image_id":"a","country":"RU","timestamp":"2019-08-03T14:00:00Z","vocabulary":"coco","image_uri":null,"segments":[{"category":"person","score":0.87,"area":0.031,"polygon":[[0.1,0.2],[0.3,0.4]]}]}
{"image_id":"b","country":"CL","timestamp":null,"vocabulary":"coco","image_uri":"img/b.jpg","segments":[]}
"#;

    #[test]
    fn loads_in_order() {
        let imgs = parse_segments(TWO.as_bytes(), &coco()).unwrap();
        assert_eq!(imgs.len(), 2);
        assert_eq!(imgs[0].image_id, "a");
        assert_eq!(imgs[1].image_id, "b");
        assert_eq!(imgs[0].timestamp.unwrap().to_rfc3339(), "2019-08-03T14:00:00+00:00");
        assert_eq!(imgs[1].image_uri.as_deref(), Some("img/b.jpg"));
    }

    #[test]
    fn unknown_category_is_named() {
        let line = r#"{"image_id":"a","country":"RU","vocabulary":"coco","segments":[{"category":"laser_gun","score":0.5,"area":0.1}]}"#;
        match parse_segments(line.as_bytes(), &coco()).unwrap_err() {
            Error::UnknownCategory { category, line, .. } => {
                assert_eq!(category, "laser_gun");
                assert_eq!(line, 1);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn score_out_of_range() {
        let line = r#"{"image_id":"a","country":"RU","vocabulary":"coco","segments":[{"category":"person","score":1.3,"area":0.1}]}"#;
        assert!(matches!(
            parse_segments(line.as_bytes(), &coco()).unwrap_err(),
            Error::OutOfRange { field: "score", .. }
        ));
    }

    #[test]
    fn malformed_line_carries_number() {
        let text = format!("{}\n{{not json\n", TWO.lines().next().unwrap());
        assert!(matches!(
            parse_segments(text.as_bytes(), &coco()).unwrap_err(),
            Error::Malformed { line: 2, .. }
        ));
    }

    #[test]
    fn duplicate_image_id() {
        let first = TWO.lines().next().unwrap();
        let text = format!("{first}\n{first}\n");
        assert!(matches!(
            parse_segments(text.as_bytes(), &coco()).unwrap_err(),
            Error::Duplicate { line: 2, .. }
        ));
    }

    #[test]
    fn wrong_vocabulary() {
        let line = r#"{"image_id":"a","country":"RU","vocabulary":"lvis","segments":[]}"#;
        assert!(matches!(
            parse_segments(line.as_bytes(), &coco()).unwrap_err(),
            Error::VocabularyMismatch { .. }
        ));
    }

    #[test]
    fn empty_input() {
        assert!(parse_segments(&b""[..], &coco()).unwrap().is_empty());
    }

    fn arb_image() -> impl Strategy<Value = ImageSegments> {
        let seg = (0usize..80, 0.0f64..=1.0, 0.0f64..=1.0, proptest::option::of(proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..4)))
            .prop_map(|(c, score, area, poly)| SegmentRecord {
                category: Vocabulary::coco().category(c).unwrap().to_string(),
                score,
                area,
                polygon: poly.map(|p| p.into_iter().map(|(x, y)| [x, y]).collect()),
            });
        (
            "[a-z0-9]{1,8}",
            "[A-Z]{2}",
            proptest::option::of(0i64..2_000_000_000),
            proptest::option::of("[a-z/]{1,10}"),
            proptest::collection::vec(seg, 0..6),
        )
            .prop_map(|(id, country, ts, uri, segments)| ImageSegments {
                image_id: id,
                country,
                timestamp: ts.map(|t| DateTime::from_timestamp(t, 0).unwrap()),
                vocabulary: "coco".into(),
                image_uri: uri,
                segments,
            })
    }

    proptest! {
        #[test]
        fn write_then_load_round_trips(imgs in proptest::collection::vec(arb_image(), 0..6)) {
            let mut seen = HashSet::new();
            let imgs: Vec<_> = imgs.into_iter().filter(|i| seen.insert(i.image_id.clone())).collect();
            let text = segments_to_jsonl(&imgs);
            let back = parse_segments(text.as_bytes(), &coco()).unwrap();
            prop_assert_eq!(back, imgs);
        }
    }
}
