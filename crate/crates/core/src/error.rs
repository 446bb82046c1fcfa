use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::gaussian_ood::Side;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("covariance matrix is singular (add a ridge term)")]
    SingularCovariance,
    #[error("matrix is not positive definite (pivot {pivot} is {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} side is not configured on this scorer")]
    SideNotConfigured(Side),
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("k = {k} exceeds the reference set size {available}")]
    KTooLarge { k: usize, available: usize },

    #[error("linear combiner needs more rows than features ({rows} rows, {features} features)")]
    UnderDetermined { rows: usize, features: usize },
    #[error("design matrix is singular")]
    SingularDesign,
    #[error("missing feature `{0}`")]
    MissingFeature(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("abstention rate {alpha} removes every example")]
    EmptyAfterRemoval { alpha: f64 },

    #[error("document has no segments")]
    EmptyDocument,
    #[error("leave-one-out over mean composition needs at least two segments")]
    SingleSegment,
    #[error("exact mode is missing the embedding for `{0}`")]
    MissingVariant(String),

    #[error("bad magic bytes {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported embedding file version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype code {0}")]
    DtypeMismatch(u32),
    #[error("file truncated at byte {offset} (expected {expected} bytes)")]
    TruncatedPayload { offset: u64, expected: u64 },
    #[error("metadata has {found} lines, expected {expected}")]
    LineCountMismatch { expected: usize, found: usize },
    #[error("duplicate id `{id}` on line {line}")]
    DuplicateId { line: usize, id: String },
    #[error("malformed line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("model schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unsupported model schema version {0}")]
    VersionUnsupported(u64),
    #[error("invalid covariance: {0}")]
    BadCov(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
