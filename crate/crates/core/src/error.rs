use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // linalg
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not symmetric (max |a_ij - a_ji| = {0:e})")]
    AsymmetryTooLarge(f64),
    #[error("symmetric eigensolver did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("matrix is not positive semi-definite (eigenvalue {eigenvalue:e}, largest {largest:e})")]
    NotPsd { eigenvalue: f64, largest: f64 },
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    // ingest
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}:{line}: non-finite value", path.display())]
    NonFiniteValue { path: PathBuf, line: usize },
    #[error("dataset '{0}' contains no series")]
    EmptyDataset(String),
    #[error("dataset '{0}' has identical min and max, cannot normalize")]
    DegenerateRange(String),
    #[error("dataset '{dataset}' has no series of length >= {window_length}")]
    NoValidWindow { dataset: String, window_length: usize },
    #[error("dataset '{dataset}': {attempts} consecutive constant windows drawn")]
    ResampleExhausted { dataset: String, attempts: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    // gaussian
    #[error("at least 2 samples are required to fit, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid Gaussian parameters: {0}")]
    InvalidParams(String),

    // baselines
    #[error("input sequence is empty")]
    EmptyInput,
    #[error("sample matrix is empty")]
    EmptyMatrix,

    // analysis
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("at least {needed} points are required, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate variance: {0} is constant")]
    DegenerateVariance(&'static str),
    #[error("at least 2 datasets are required, got {0}")]
    TooFewDatasets(usize),
    #[error("pair ({left}, {right}): {source}")]
    Pair {
        left: String,
        right: String,
        #[source]
        source: Box<Error>,
    },
    #[error("metric '{0}' needs raw datasets, sketches are not sufficient")]
    MetricNeedsRawData(String),
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
    #[error("source label '{0}' is not in the matrix")]
    UnknownSourceLabel(String),
    #[error("only {found} labels appear in both the matrix and the losses, need at least {needed}")]
    InsufficientOverlap { needed: usize, found: usize },
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    // layout
    #[error("layout needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("non-positive target distance between '{left}' and '{right}'")]
    NonPositiveDistance { left: String, right: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, e: serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        }
    }
}
