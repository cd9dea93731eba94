use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("unsupported size: {0}")]
    UnsupportedSize(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("singular block gram T[{user},{block}] (condition estimate {condition:.3e})")]
    SingularGram {
        user: usize,
        block: usize,
        condition: f64,
    },
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("power iteration did not converge after {iterations} iterations (last relative change {last_change:.3e})")]
    Convergence { iterations: usize, last_change: f64 },
    #[error("infeasible ball: |y| = {y_norm:.6e} does not exceed eta = {eta:.6e}")]
    InfeasibleBall { y_norm: f64, eta: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
