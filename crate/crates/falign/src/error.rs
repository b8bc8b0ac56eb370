use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {lhs_rows}x{lhs_cols} vs {rhs_rows}x{rhs_cols}")]
    Shape {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    #[error("{op}: {msg}")]
    Dimension { op: &'static str, msg: String },

    #[error("non-finite value: {context}")]
    NonFinite { context: String },

    #[error("{op}: numeric domain error: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("alignment undefined: {which} operand has zero norm")]
    ZeroAlignment { which: &'static str },

    #[error("feedback matrix for layer {layer} is rank deficient (rank {rank}, expected {expected})")]
    RankDeficient {
        layer: usize,
        rank: usize,
        expected: usize,
    },

    #[error("IDX parse error in {path} at byte {offset}: {msg}")]
    IdxParse {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at update step {step}: {msg}")]
    Diverged { step: u64, msg: String },

    #[error("empty dataset")]
    EmptyDataset,
}

pub type Result<T> = std::result::Result<T, Error>;
