//! Error taxonomy shared by every engine.
//!
//! The variants mirror how callers are expected to react: `Domain` and
//! `Resource` are caller mistakes, `Contract` and `InvalidDensity` indicate a
//! broken mathematical precondition discovered mid-computation, and the rest
//! are engine-specific failure modes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument values (nonpositive horizon, unknown catalog name, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Request exceeds a memory / size cap.
    #[error("resource error: {0}")]
    Resource(String),

    /// A generator f cannot be written as f(z) = z . g(z) with continuous g.
    #[error("not representable: {0}")]
    NotRepresentable(String),

    /// A density multiplier is nonpositive, so the candidate measure is not
    /// equivalent to the historical one.
    #[error("invalid density: {0}")]
    InvalidDensity(String),

    /// A structural precondition (e.g. martingale property) failed; carries
    /// the worst observed violation.
    #[error("contract violation: {what} (max violation {max_violation:.3e})")]
    Contract { what: String, max_violation: f64 },

    /// Singular or ill-posed regression design.
    #[error("basis error: {0}")]
    Basis(String),

    /// Importance weights degenerate (effective sample size collapsed).
    #[error("importance-weight error: {0}")]
    ImportanceWeight(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
