use thiserror::Error;

/// Errors raised by the Lie-group kernel, the controller and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The logarithm was asked for a rotation outside the principal branch.
    #[error("log branch cut: rotation angle {angle} is not below pi")]
    BranchCut { angle: f64 },

    /// dexp^-1 has a pole at |omega| = 2*pi.
    #[error("dexp inverse singular: |omega| = {norm}")]
    Singularity { norm: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("divergence at t = {t}: {what}")]
    Divergence { t: f64, what: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
