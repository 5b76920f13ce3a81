use std::fmt;
use std::path::PathBuf;

use fdp_core::FdpError;

/// Failure of a pipeline stage, carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, selector, or input file (exit 1).
    Validation(String),
    /// A fit could not produce a certified state (exit 2).
    Solver(String),
    /// Outputs exist but violate a configured threshold (exit 3).
    Acceptance(Vec<String>),
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Solver(_) => 2,
            CliError::Acceptance(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
            CliError::Acceptance(v) => {
                write!(f, "{} acceptance threshold(s) violated", v.len())?;
                for line in v {
                    write!(f, "\n  {line}")?;
                }
                Ok(())
            }
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<FdpError> for CliError {
    fn from(e: FdpError) -> Self {
        match e {
            FdpError::Solver(_) => CliError::Solver(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
