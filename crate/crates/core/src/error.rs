//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input: violated precondition, malformed request.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Spectrum with fewer than two distinct levels.
    #[error("degenerate spectrum: {0}")]
    Degenerate(String),
    /// Requested computation exceeds a hard resource cap.
    #[error("resource limit: {0}")]
    Resource(String),
    /// Solver non-convergence or an infeasible implicit equation.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The implicit heat/entropy equations have no solution in range.
    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
    pub fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }

    /// Process exit code for the CLI: validation errors exit 2, numerical
    /// failures and resource caps exit 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Degenerate(_) => 2,
            Error::Resource(_) | Error::Numerical(_) | Error::Infeasible(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
