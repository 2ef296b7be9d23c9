use std::fmt;

/// Failure classes of a run, each with its own process exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Malformed or inconsistent configuration; carries the failing key path.
    Schema { path: String, message: String },
    /// A runtime contract of the library was violated.
    Contract(String),
    /// A configured budget ran out before the run finished.
    Budget(String),
    Io(String),
}

impl CliError {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema { .. } => 2,
            Self::Contract(_) => 3,
            Self::Budget(_) => 4,
            Self::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Schema { path, message } => write!(f, "config error at `{path}`: {message}"),
            Self::Contract(m) => write!(f, "contract violation: {m}"),
            Self::Budget(m) => write!(f, "budget exceeded: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<paraccel::Error> for CliError {
    fn from(e: paraccel::Error) -> Self {
        match e {
            paraccel::Error::DepthBudgetExceeded { .. } => Self::Budget(e.to_string()),
            other => Self::Contract(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
