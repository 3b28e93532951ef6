use thiserror::Error;

/// Errors shared across the codec.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: no data rows")]
    EmptyInput,

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {col}: cannot parse {text:?} as a number")]
    ParseNumber {
        row: usize,
        col: usize,
        text: String,
    },

    #[error("row {row}, column {col}: non-finite value")]
    NonFiniteCell { row: usize, col: usize },

    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("k = {k} out of range, must be in [1, {max}]")]
    KOutOfRange { k: usize, max: usize },

    #[error("mantissa width {bits} out of range, must be in [4, 32]")]
    MantissaWidth { bits: u8 },

    #[error("block of length {len} does not match shape {rows}x{cols}")]
    BlockShape {
        len: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("SVD did not converge within {iterations} iterations")]
    SvdDidNotConverge { iterations: usize },

    #[error("bad archive magic {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported archive version {found}")]
    UnsupportedVersion { found: u16 },

    #[error("archive length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: u64, found: u64 },

    #[error("CRC mismatch in {section}")]
    CrcMismatch { section: &'static str },

    #[error("invalid archive: {reason}")]
    InvalidArchive { reason: String },

    #[error("corrupt sparse block: {reason}")]
    CorruptSparseBlock { reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
