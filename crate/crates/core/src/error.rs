use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ForgeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed toml: {0}")]
    Toml(String),

    #[error("schema mismatch in {file}: column {position} is `{found}`, expected `{expected}`")]
    Schema {
        file: String,
        position: usize,
        expected: String,
        found: String,
    },

    #[error("cannot parse cell at row {row}, column `{column}`: `{value}`")]
    Cell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid key at row {row}: {reason}")]
    Key { row: usize, reason: String },

    #[error("source {file} has several rows for participant {participant} on {date}; sub-daily data must be aggregated to one row per day before ingestion")]
    SubDaily {
        file: String,
        participant: String,
        date: String,
    },

    #[error("column `{0}` appears in more than one source")]
    DuplicateColumn(String),

    #[error("column `{0}` has no modality tag")]
    Untagged(String),

    #[error("table has no target column")]
    NoTarget,

    #[error("participant {participant} has no observed values in column `{column}`")]
    Unimputable { participant: String, column: String },

    #[error("invalid stress label {value} at row {row}")]
    InvalidLabel { row: usize, value: f64 },

    #[error("class {class} has {count} rows, needs more than k = {k} for neighbour search")]
    ClassTooSmall { class: u32, count: usize, k: usize },

    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),

    #[error("feature matrix has missing or non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("expected {expected} features, got {found}")]
    Arity { expected: usize, found: usize },

    #[error("length mismatch: {left} true labels vs {right} predictions")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    Empty,

    #[error("class sets differ: {0:?} vs {1:?}")]
    ClassSetMismatch(Vec<u32>, Vec<u32>),

    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid generator spec: {0}")]
    Generator(String),

    #[error("unsupported model format `{format}` version {version}")]
    ModelFormat { format: String, version: u32 },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<ForgeError>,
    },
}

impl ForgeError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ForgeError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        ForgeError::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        ForgeError::Json {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            already @ ForgeError::Stage { .. } => already,
            other => ForgeError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
