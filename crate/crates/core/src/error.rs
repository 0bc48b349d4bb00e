use thiserror::Error;

#[derive(Debug, Error)]
pub enum KseError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("spectrum is not Hermitian (imaginary residue {residue:.3e} of field norm)")]
    NotHermitian { residue: f64 },
    #[error("blow-up at t = {time}: max |phi| = {max_abs:.3e}")]
    BlowUp { time: f64, max_abs: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("action amplitude {value} at index {index} outside [-{bound}, {bound}]")]
    ActionOutOfBounds {
        index: usize,
        value: f64,
        bound: f64,
    },
    #[error("verification failed: relative residual {residual:.3e} above {tolerance:.1e}")]
    Verification { residual: f64, tolerance: f64 },
    #[error("record {id}: {reason}")]
    Ingest { id: String, reason: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KseError>;
