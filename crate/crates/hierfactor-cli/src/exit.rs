use std::process::ExitCode;

/// Process-level failure classes, each with a fixed exit code: bad inputs
/// exit 2, estimation breakdowns exit 3, filesystem problems exit 4.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(2),
            CliError::Numeric(_) => ExitCode::from(3),
            CliError::Io(_) => ExitCode::from(4),
        }
    }

    pub fn io(context: &str, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "invalid input: {msg}"),
            CliError::Numeric(msg) => write!(f, "estimation failed: {msg}"),
            CliError::Io(msg) => write!(f, "i/o failed: {msg}"),
        }
    }
}

impl From<hierfactor::Error> for CliError {
    fn from(err: hierfactor::Error) -> Self {
        match err {
            hierfactor::Error::Validation(_) | hierfactor::Error::InvalidArgument(_) => {
                CliError::Validation(err.to_string())
            }
            _ => CliError::Numeric(err.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
