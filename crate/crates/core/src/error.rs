use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error(
        "partition is not equitable: vertices '{vertex_a}' and '{vertex_b}' disagree on their \
         total edge weight into the other class by {discrepancy:.3e} (relative {relative:.3e})"
    )]
    NotEquitable {
        vertex_a: String,
        vertex_b: String,
        discrepancy: f64,
        relative: f64,
    },

    #[error(
        "integration stalled at t = {t:.6e} s (step {dt:.3e} s): the problem is too stiff for \
         the selected method at these tolerances; use the stiff method or relax tolerances"
    )]
    Stiffness { t: f64, dt: f64 },

    #[error("trajectory did not reach steady state within t_end = {t_end:.3e} s")]
    NonConverged { t_end: f64 },

    #[error("no decay segment: {0}")]
    NoDecaySegment(String),

    #[error("explicit step dt = {dt:.3e} s violates the diffusion CFL limit {limit:.3e} s")]
    CflViolation { dt: f64, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
