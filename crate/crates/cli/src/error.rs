use std::fmt;
use std::path::PathBuf;

/// Failures surfaced by the `hard` binary. Each maps to an exit code and a
/// one-line diagnostic.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, unparsable or invalid configuration, or bad arguments.
    Config(String),
    /// Training produced a NaN or infinity; `log` holds the partial log.
    NonFinite { message: String, log: PathBuf },
    Core(hard_core::Error),
    Io { path: PathBuf, source: std::io::Error },
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonFinite { .. } => 3,
            _ => 1,
        }
    }

    /// Short machine-readable tag used in the error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::NonFinite { .. } => "non-finite",
            CliError::Core(_) => "core",
            CliError::Io { .. } => "io",
            CliError::Other(_) => "error",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// `hard: error[<kind>]: <message>` with newlines flattened.
    pub fn one_line(&self) -> String {
        format!("hard: error[{}]: {}", self.kind(), self.to_string().replace(['\n', '\r'], " "))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Other(m) => f.write_str(m),
            CliError::NonFinite { message, log } => write!(f, "{message}; partial log at {}", log.display()),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hard_core::Error> for CliError {
    fn from(e: hard_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
