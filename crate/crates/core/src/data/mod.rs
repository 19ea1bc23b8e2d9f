//! Domain records and their file formats: segment JSON Lines, label CSV,
//! embedding CSV and plain-text vocabularies.

mod embeddings;
mod labels;
mod segments;
mod vocabulary;

pub use embeddings::{load_embeddings, read_embeddings, write_embeddings, EmbeddingMatrix};
pub use labels::{binary_targets, load_labels, read_labels, write_labels, Label, LabelRecord};
pub use segments::{
    load_segments, parse_segments, segments_to_jsonl, write_segments, ImageSegments, SegmentRecord,
};
pub use vocabulary::Vocabulary;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_line(err: &csv::Error) -> usize {
    err.position().map_or(0, |p| p.line() as usize)
}
