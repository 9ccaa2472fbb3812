use crate::lp::LpError;
use crate::network::NetworkError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    /// A model that must be feasible by construction was not.
    #[error("internal consistency failure: {0}")]
    Internal(String),
    #[error("invalid input: {0}")]
    Input(String),
}

impl Error {
    /// True for failures caused by bad input rather than numerics.
    pub fn is_input(&self) -> bool {
        matches!(self, Error::Network(_) | Error::Input(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
