use std::fmt;

/// Failure of a command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or input file (exit 2).
    Config(String),
    /// A fixed-point solve or run did not converge (exit 3).
    Numerical(String),
    /// Reading or writing files failed (exit 4).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cauchy_fde::Error> for CliError {
    fn from(e: cauchy_fde::Error) -> Self {
        match e {
            cauchy_fde::Error::Io(io) => CliError::Io(io.to_string()),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
