use thiserror::Error;

/// Errors raised by the laboratory routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("non-finite input to {context}: {value}")]
    NonFinite { context: &'static str, value: f64 },

    #[error("{context}: value {value} outside the admissible domain ({detail})")]
    Domain {
        context: &'static str,
        value: f64,
        detail: String,
    },

    /// The slope diverges as `y` approaches `0` or `Φ(t)`; the solve is refused.
    #[error("ill-conditioned slope problem at t={t}, p={p}, y={y}: {detail}")]
    IllConditioned {
        t: f64,
        p: f64,
        y: f64,
        detail: String,
    },

    #[error(
        "quadrature did not converge after {subdivisions} subdivisions \
         (estimate {estimate}, error estimate {error_estimate})"
    )]
    QuadratureNotConverged {
        estimate: f64,
        error_estimate: f64,
        subdivisions: usize,
    },

    #[error("root solver failed: {0}")]
    RootNotFound(String),

    /// Radicand of the HJB left-hand side went negative; this indicates a numerics bug.
    #[error("negative radicand {radicand} in HJB identity at t={t}, p={p}, y={y}")]
    NegativeRadicand {
        t: f64,
        p: f64,
        y: f64,
        radicand: f64,
    },

    #[error("size mismatch: {what} has {got} entries, expected {expected}")]
    SizeMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at `{token}`: {reason}")]
    Parse { token: String, reason: String },
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn ensure_finite(context: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(LabError::NonFinite { context, value })
    }
}
