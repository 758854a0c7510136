use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular configuration: {0}")]
    Singular(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("ill-conditioned data (condition number {cond:.3e} exceeds {cap:.1e})")]
    IllConditioned { cond: f64, cap: f64 },
    #[error("LMI infeasible after {restarts} restarts (best margin {best_margin:.3e})")]
    Infeasible { restarts: usize, best_margin: f64 },
    #[error("certificate check failed: {0}")]
    Certificate(String),
    #[error("non-finite state at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
