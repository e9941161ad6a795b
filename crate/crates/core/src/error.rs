use thiserror::Error;

#[derive(Debug, Error)]
pub enum GppmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("Cholesky factorization failed after jitter escalation to {jitter:e}")]
    Cholesky { jitter: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index {index} outside grid of length {len} ({what})")]
    OutOfGrid {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("diagnostic undefined: {0}")]
    Diagnostic(String),

    #[error("sampler aborted: {divergent} of {total} sampling iterations diverged")]
    TooManyDivergences { divergent: usize, total: usize },

    #[error("panel: {0}")]
    Panel(String),

    #[error("draw file: {0}")]
    DrawFile(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl GppmError {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            GppmError::NonFinite(_)
                | GppmError::Cholesky { .. }
                | GppmError::Diagnostic(_)
                | GppmError::TooManyDivergences { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, GppmError>;
