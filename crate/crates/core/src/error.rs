use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is singular to working precision")]
    Singular,

    #[error("nonpositive diagonal entry {value} in row {row}")]
    NonPositiveDiagonal { row: usize, value: f64 },

    #[error("zero pivot in row {row}")]
    ZeroPivot { row: usize },

    #[error("{rows}x{cols} matrix exceeds crossbar capacity {max_rows}x{max_cols}")]
    ArrayTooLarge {
        rows: usize,
        cols: usize,
        max_rows: usize,
        max_cols: usize,
    },

    #[error("cannot program an all-zero matrix")]
    ZeroMatrix,

    #[error("iteration diverged at step {iteration} (relative residual {residual:e})")]
    Diverged { iteration: usize, residual: f64 },

    #[error("n = {n} exceeds the dense-inverse limit {limit}")]
    TooLargeForDense { n: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid sparse matrix structure: {0}")]
    InvalidStructure(String),

    #[error("MatrixMarket line {line}: {msg}")]
    MatrixMarket { line: usize, msg: String },

    #[error("device config line {line}: {msg}")]
    DeviceConfig { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
