use lme_core::network::{NetworkError, ScenarioError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<lme_core::Error> for CliError {
    fn from(e: lme_core::Error) -> Self {
        match e {
            lme_core::Error::Network(n) => CliError::Network(n),
            e if e.is_input() => CliError::Input(e.to_string()),
            e => CliError::Solver(e.to_string()),
        }
    }
}

impl CliError {
    /// 1 for solver or numerical failures, 2 for bad input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 1,
            _ => 2,
        }
    }
}
