use std::path::Path;

use thiserror::Error;

/// A failure carrying the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration, arguments or input files (exit 2).
    #[error("{0}")]
    Config(String),
    /// Incompatible tensor shapes (exit 3).
    #[error("{0}")]
    Shape(String),
    /// Non-finite values (exit 4).
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Shape(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// Wraps a core error raised while handling `path`.
    pub fn at(path: &Path, e: sep_core::Error) -> Self {
        match CliError::from(e) {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        }
    }
}

impl From<sep_core::Error> for CliError {
    fn from(e: sep_core::Error) -> Self {
        use sep_core::Error as E;
        match e {
            E::Dimension { .. } => CliError::Shape(e.to_string()),
            E::Numeric { .. } => CliError::Numeric(e.to_string()),
            E::Argument { .. } | E::Format { .. } | E::MissingParam(_) | E::Io(_) => {
                CliError::Config(e.to_string())
            }
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
