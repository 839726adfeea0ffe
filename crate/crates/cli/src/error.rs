use thiserror::Error;

/// Failures of a CLI invocation, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, bad input data or an incompatible setup. Exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// The experiment aborted while running. Exit code 3.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}
