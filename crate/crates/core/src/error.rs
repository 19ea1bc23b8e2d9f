use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front-ends to pick exit codes / HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Input data failed validation.
    Data,
    /// Inputs were valid but the computation cannot proceed (e.g. one class only).
    Compute,
    /// Invalid parameters supplied by the caller.
    Usage,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown category {category:?} for vocabulary {vocabulary:?}")]
    UnknownCategory {
        line: usize,
        category: String,
        vocabulary: String,
    },
    #[error("line {line}: {field} = {value} is out of range")]
    OutOfRange {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: duplicate {what} {id:?}")]
    Duplicate {
        line: usize,
        what: &'static str,
        id: String,
    },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-finite value")]
    NonFinite { line: usize },
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("vocabulary mismatch: expected {expected:?}, found {found:?}")]
    VocabularyMismatch { expected: String, found: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("{0}")]
    Computation(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::SingleClass | Error::Computation(_) => ErrorKind::Compute,
            Error::InvalidParams(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
