use thiserror::Error;

/// Errors produced by the simulation and fitting routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbachError {
    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("rate matrix is defective or not a valid generator: {0}")]
    Defective(String),

    #[error("underdetermined problem: {0}")]
    Underdetermined(String),

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("malformed data: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, OrbachError>;

pub(crate) fn invalid(msg: impl Into<String>) -> OrbachError {
    OrbachError::InvalidParameter(msg.into())
}
