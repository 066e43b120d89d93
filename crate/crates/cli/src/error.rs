use thiserror::Error;

/// Failures grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<cdac_core::Error> for CliError {
    fn from(e: cdac_core::Error) -> Self {
        use cdac_core::Error as E;
        match e {
            E::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            // Parameters are validated before any work starts, so invalid
            // input reaching the library still stems from the config.
            E::InvalidInput(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
