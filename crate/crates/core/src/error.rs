use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed delimited input: {0}")]
    Csv(#[from] csv::Error),

    #[error("column not found: {0}")]
    ColumnNotFound(String),

    #[error("parse error at row {row}, column {column}: {value:?} is not an integer")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("raw value {value} of field {field} is not covered by any rule for {feature}")]
    UncoveredCode {
        feature: String,
        field: String,
        value: i64,
    },

    #[error("missing value {value} in field {field} at row {row} (strict mode disabled)")]
    MissingValue {
        field: String,
        row: usize,
        value: i64,
    },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("class counts are empty")]
    EmptyCounts,

    #[error("partition totals {children} do not match parent total {parent}")]
    InconsistentTotals { parent: u64, children: u64 },

    #[error("contingency table is degenerate: {0}")]
    DegenerateTable(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("no out-of-bag rows")]
    NoOutOfBagRows,

    #[error("logistic fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("{m} features exceed the brute-force limit of {max}")]
    TooManyFeatures { m: usize, max: usize },

    #[error("background set is empty")]
    EmptyBackground,

    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model family {family} failed: {source}")]
    Family {
        family: String,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
