use thiserror::Error;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("resource cap: {0}")]
    ResourceCap(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput(_) | CliError::Io { .. } => 2,
            CliError::ResourceCap(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }

    pub fn bad(msg: impl Into<String>) -> Self {
        CliError::BadInput(msg.into())
    }
}

impl From<sconv_core::Error> for CliError {
    fn from(e: sconv_core::Error) -> Self {
        use sconv_core::Error as E;
        match e {
            E::ResourceCap { .. } | E::CombinatorialLimit { .. } => CliError::ResourceCap(e.to_string()),
            E::InvariantViolation(_) => CliError::Invariant(e.to_string()),
            _ => CliError::BadInput(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::BadInput(format!("json: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
