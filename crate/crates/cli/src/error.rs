use thiserror::Error;

/// CLI failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    /// A hard invariant or hypothesis check failed.
    #[error("invariant failure: {0}")]
    Invariant(String),
    /// Integration, Newton or search failure.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Invariant(_) => 1,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage_error",
            CliError::Config(_) => "config_error",
            CliError::Invariant(_) => "invariant_failure",
            CliError::Numerical(_) => "numerical_failure",
        }
    }
}

impl From<contact_hj::Error> for CliError {
    fn from(e: contact_hj::Error) -> Self {
        use contact_hj::Error as E;
        match &e {
            _ if e.is_numerical() => CliError::Numerical(e.to_string()),
            E::InvalidInput(_) => CliError::Config(e.to_string()),
            E::Csv(_) | E::Io(_) => CliError::Usage(e.to_string()),
            _ => CliError::Invariant(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("json: {e}"))
    }
}
