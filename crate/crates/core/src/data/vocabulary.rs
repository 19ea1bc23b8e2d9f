use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

const COCO: &str = include_str!("../../data/coco.txt");
const LVIS: &str = include_str!("../../data/lvis.txt");

/// Ordered category list of a segmenter. The position of a category is its
/// feature-vector index.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    name: String,
    categories: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(name: impl Into<String>, categories: Vec<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Vocabulary("empty vocabulary name".into()));
        }
        let mut index = HashMap::with_capacity(categories.len());
        for (i, c) in categories.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::Vocabulary(format!("empty category name at index {i}")));
            }
            if index.insert(c.clone(), i).is_some() {
                return Err(Error::Vocabulary(format!("duplicate category {c:?}")));
            }
        }
        Ok(Vocabulary {
            name,
            categories,
            index,
        })
    }

    /// The 80 COCO categories.
    pub fn coco() -> Self {
        Self::parse("coco", COCO).expect("bundled coco vocabulary is valid")
    }

    /// The 1,203 LVIS v1 categories.
    pub fn lvis() -> Self {
        Self::parse("lvis", LVIS).expect("bundled lvis vocabulary is valid")
    }

    /// One category per line; blank trailing lines are ignored.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let categories = text
            .lines()
            .map(|l| l.trim_end_matches('\r').to_string())
            .collect::<Vec<_>>();
        let trimmed = match categories.iter().rposition(|c| !c.is_empty()) {
            Some(last) => categories[..=last].to_vec(),
            None => Vec::new(),
        };
        Self::new(name, trimmed)
    }

    /// Reads a vocabulary file; its name is the file stem.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Vocabulary(format!("cannot derive a name from {}", path.display())))?;
        Self::parse(name, &text)
    }

    /// `coco`, `lvis`, or a path to a vocabulary file.
    pub fn resolve(spec: &str) -> Result<Self> {
        match spec {
            "coco" => Ok(Self::coco()),
            "lvis" => Ok(Self::lvis()),
            path => Self::from_file(Path::new(path)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn size(&self) -> usize {
        self.categories.len()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn index_of(&self, category: &str) -> Option<usize> {
        self.index.get(category).copied()
    }

    pub fn category(&self, index: usize) -> Option<&str> {
        self.categories.get(index).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.categories.join("\n");
        s.push('\n');
        s
    }
}
