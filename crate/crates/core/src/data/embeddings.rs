use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use super::{csv_line, open};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One embedding row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    image_ids: Vec<String>,
    values: Matrix,
}

impl EmbeddingMatrix {
    pub fn new(image_ids: Vec<String>, values: Matrix) -> Result<Self> {
        if image_ids.len() != values.rows() {
            return Err(Error::InvalidInput(format!(
                "{} image ids for {} embedding rows",
                image_ids.len(),
                values.rows()
            )));
        }
        let mut seen = HashSet::new();
        for (i, id) in image_ids.iter().enumerate() {
            if !seen.insert(id) {
                return Err(Error::Duplicate {
                    line: i + 2,
                    what: "image_id",
                    id: id.clone(),
                });
            }
            if values.row(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { line: i + 2 });
            }
        }
        Ok(EmbeddingMatrix { image_ids, values })
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }
}

/// Reads `image_id,d0,...,d{dim-1}`. Rows must be rectangular, finite and
/// have nonzero norm.
pub fn read_embeddings<R: Read>(reader: R) -> Result<EmbeddingMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header_len = match rdr.headers() {
        Ok(h) => h.len(),
        Err(e) => {
            return Err(Error::Malformed {
                line: 1,
                message: e.to_string(),
            })
        }
    };
    let dim = header_len.saturating_sub(1);
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed {
            line: csv_line(&e),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(ids.len() + 2, |p| p.line() as usize);
        if rec.len() != header_len {
            return Err(Error::DimensionMismatch {
                line,
                expected: dim,
                found: rec.len().saturating_sub(1),
            });
        }
        let mut norm = 0.0;
        for field in rec.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| Error::Malformed {
                line,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { line });
            }
            norm += v * v;
            data.push(v);
        }
        if norm == 0.0 {
            return Err(Error::OutOfRange {
                line,
                field: "embedding norm",
                value: "0".into(),
            });
        }
        ids.push(rec[0].to_string());
    }
    if ids.is_empty() {
        return EmbeddingMatrix::new(Vec::new(), Matrix::zeros(0, dim));
    }
    let rows = ids.len();
    EmbeddingMatrix::new(ids, Matrix::from_vec(rows, dim, data)?)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    read_embeddings(open(path)?)
}

pub fn write_embeddings(path: &Path, emb: &EmbeddingMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Computation(e.to_string()))?;
    let mut header = vec!["image_id".to_string()];
    header.extend((0..emb.dim()).map(|d| format!("d{d}")));
    let res = w.write_record(&header).and_then(|_| {
        emb.image_ids().iter().enumerate().try_for_each(|(i, id)| {
            let mut rec = vec![id.clone()];
            rec.extend(emb.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)
        })
    });
    res.map_err(|e| Error::Computation(e.to_string()))?;
    w.flush().map_err(|e| Error::io(path, e))
}
