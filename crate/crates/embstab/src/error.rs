//! Error type shared across the crate.

use std::fmt;
use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Malformed input text (corpus, group file, model file, coding dump).
    Format { line: usize, message: String },
    /// A corpus with zero sessions where at least one is required.
    EmptyCorpus,
    /// Every type fell below the min-count threshold.
    EmptyVocabulary,
    /// Index outside the valid range.
    OutOfRange { index: usize, len: usize },
    /// A type id that is not part of the vocabulary at hand.
    UnknownType(String),
    /// A fixed Huffman coding that does not cover the training vocabulary.
    CodingMismatch(String),
    /// Non-finite values appeared in the weight matrices.
    NumericDivergence { epoch: usize },
    /// Cosine similarity is undefined for the zero vector.
    ZeroVector(String),
    /// A statistic that requires variance got a constant input.
    ZeroVariance(String),
    /// Design matrix is rank deficient.
    Collinear { columns: Vec<String> },
    /// Too few observations for the requested fit.
    TooFewObservations { n: usize, needed: usize },
    /// A parameter violated its documented precondition.
    InvalidParameter(String),
    /// Seeds requested for an overlap report that a model does not contain.
    MissingSeeds(Vec<String>),
    /// A file the operation needs does not exist.
    MissingFile(PathBuf),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Format { line, message } => write!(f, "format error at line {line}: {message}"),
            Error::EmptyCorpus => write!(f, "corpus contains no sessions"),
            Error::EmptyVocabulary => write!(f, "no type survives the min-count threshold"),
            Error::OutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::UnknownType(id) => write!(f, "type '{id}' not in vocabulary"),
            Error::CodingMismatch(id) => {
                write!(f, "fixed coding does not cover vocabulary type '{id}'")
            }
            Error::NumericDivergence { epoch } => {
                write!(f, "non-finite values detected during training epoch {epoch}")
            }
            Error::ZeroVector(id) => write!(f, "zero vector for '{id}': cosine undefined"),
            Error::ZeroVariance(what) => write!(f, "zero variance in {what}"),
            Error::Collinear { columns } => {
                write!(f, "collinear design matrix, offending column(s): {}", columns.join(", "))
            }
            Error::TooFewObservations { n, needed } => {
                write!(f, "{n} observations, need at least {needed}")
            }
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::MissingSeeds(ids) => {
                write!(f, "seed(s) missing from model vocabulary: {}", ids.join(", "))
            }
            Error::MissingFile(path) => write!(f, "missing file: {}", path.display()),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
