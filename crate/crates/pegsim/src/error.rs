//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulation and synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("sample periods differ: {0} s vs {1} s")]
    SamplePeriodMismatch(f64, f64),
    #[error("algebraic loop ill-posed: |1 + D| = {0:.3e}")]
    IllPosedLoop(f64),
    #[error("eigenvalue iteration failed to converge")]
    EigenNonConvergence,
    #[error("inner loop model is unstable (spectral radius {0:.6})")]
    UnstableInnerLoop(f64),
    #[error("linear program infeasible or unbounded: {0}")]
    LpFailed(String),
    #[error("synthesis post-verification failed: spectral radius {rho:.6} at stiffness {stiffness} N/mm")]
    CertificateFailed { stiffness: f64, rho: f64 },
    #[error("config validation: {0}")]
    ConfigInvalid(String),
    #[error("contact penetration {0:.3} mm exceeds the blow-up limit")]
    Blowup(f64),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("TOML parse error: {0}")]
    Toml(String),
}

pub type Result<T> = std::result::Result<T, Error>;
