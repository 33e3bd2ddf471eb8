use thiserror::Error;

#[derive(Debug, Error)]
pub enum HtlError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {iterations} iterations (gradient-mapping norm {grad_norm:e}, objective {objective})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        objective: f64,
        best_w: Vec<f64>,
    },

    #[error("non-finite objective: {0}")]
    NonFinite(String),

    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = HtlError> = std::result::Result<T, E>;

impl HtlError {
    pub fn domain(msg: impl Into<String>) -> Self {
        HtlError::Domain(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        HtlError::InvalidArgument(msg.into())
    }
}

pub fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(HtlError::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}
