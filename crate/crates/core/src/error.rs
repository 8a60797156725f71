//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index {index} out of range for codebook of {num_vectors} vectors (level {level})")]
    IndexOutOfRange {
        level: usize,
        index: u32,
        num_vectors: usize,
    },

    #[error("empty codebook at level {0}")]
    EmptyCodebook(usize),

    #[error("alist parse error: {0}")]
    AlistParse(String),

    #[error("LDPC code construction failed: {0}")]
    CodeConstruction(String),

    #[error("bitstream length mismatch: expected {expected} bits, got {got}")]
    BitstreamLength { expected: usize, got: usize },

    #[error("no AMC mode covers SNR {snr_db} dB")]
    AmcGap { snr_db: f64 },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("CSV schema violation: {0}")]
    CsvSchema(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
