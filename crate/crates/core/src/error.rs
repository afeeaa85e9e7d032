use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate covariance: eigenvalues {eigenvalues:?} below floor {floor:e} along null directions {directions:?}")]
    DegenerateCovariance {
        floor: f64,
        eigenvalues: Vec<f64>,
        directions: Vec<Vec<f64>>,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("PSD violation: minimum eigenvalue {min_eigenvalue:e} (step size too large for this integrator)")]
    PsdViolation { min_eigenvalue: f64 },

    #[error("flow stalled at t = {t} after {attempts} backtracks (last h = {last_step:e}, loss {loss} -> {attempted_loss})")]
    StalledFlow {
        t: f64,
        attempts: usize,
        last_step: f64,
        loss: f64,
        attempted_loss: f64,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
