use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    DimensionMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("length mismatch in {op}: expected {expected}, got {actual}")]
    LengthMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("negative value {value} at ({row}, {col})")]
    NegativeValue { row: usize, col: usize, value: f64 },
    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),
    #[error("non-finite or non-positive value {value} at position {index} in {what}")]
    InvalidValue {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown {kind} token {token:?}")]
    UnknownToken { kind: &'static str, token: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset is empty after {0}")]
    EmptyDataset(&'static str),
    #[error("item {0} has no features")]
    ItemWithoutFeatures(usize),
    #[error("feature {0} occurs in no item")]
    UnusedFeature(usize),
    #[error("relevant set is empty")]
    EmptyRelevant,
    #[error("training diverged at epoch {epoch}: loss {loss:.6e} exceeds 10x the initial loss {initial:.6e}")]
    Divergence { epoch: usize, loss: f64, initial: f64 },
    #[error("{0}")]
    Other(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
