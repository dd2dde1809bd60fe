use std::path::PathBuf;

use pcm_forge_core::scenario::ScenarioError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: file not found", path.display())]
    MissingInput { path: PathBuf },
    #[error("{0}")]
    Validation(String),
    #[error("{message}")]
    Solver { message: String, logs: Vec<PathBuf> },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput { .. } => 2,
            CliError::Validation(_) => 3,
            CliError::Solver { .. } => 4,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingInput { path }
            }
            ScenarioError::Io { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}
