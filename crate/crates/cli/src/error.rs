use std::fmt;
use std::path::Path;

use sppc_core::SppcError;

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    Core(SppcError),
    /// Malformed input file.
    Input(String),
    Io(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// 2 for invalid input, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) => 3,
            CliError::Input(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Input(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<SppcError> for CliError {
    fn from(e: SppcError) -> Self {
        CliError::Core(e)
    }
}
