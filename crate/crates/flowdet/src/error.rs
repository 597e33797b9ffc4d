//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // --- ingestion ---
    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),
    #[error("malformed value `{value}` for column `{column}` at line {line}")]
    MalformedRow {
        line: u64,
        column: String,
        value: String,
    },
    #[error("invalid label `{value}` at line {line}: expected 0 or 1")]
    InvalidLabel { line: u64, value: String },
    #[error("file `{0}` contains no data rows")]
    EmptyFile(String),
    #[error("dataset is empty")]
    EmptyDataset,

    // --- preprocessing ---
    #[error("empty input")]
    EmptyInput,
    #[error("encoder is not fitted")]
    NotFitted,
    #[error("feature arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("need at least {needed} rows to build a window, found {found}")]
    TooFewRecords { needed: usize, found: usize },
    #[error("bad split ratios: {0}")]
    BadRatios(String),

    // --- layer primitives ---
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input too short: length {len} < required {required}")]
    InputTooShort { len: usize, required: usize },
    #[error("dropout rate {0} outside [0, 1)")]
    BadRate(f64),
    #[error("empty sequence")]
    EmptySequence,

    // --- model / checkpoint ---
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unsupported checkpoint format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    // --- training / evaluation ---
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    // --- configuration ---
    #[error("config error: {0}")]
    Config(String),
}
