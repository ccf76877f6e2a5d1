use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the command-line layer. Each maps to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("schema mismatch in {path}: {message}")]
    SchemaMismatch { path: PathBuf, message: String },

    #[error("dates are not strictly increasing in {path} at data row {row} ({date})")]
    NonMonotoneDates { path: PathBuf, row: usize, date: String },

    #[error("no run artifacts found under {0}")]
    MissingArtifacts(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Model(#[from] cqe_core::Error),

    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit status: 1 config/validation, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Model(e) => match e {
                cqe_core::Error::InvalidLevel(_)
                | cqe_core::Error::InvalidParameter { .. }
                | cqe_core::Error::UnsortedGrid => 1,
                _ => 2,
            },
            CliError::SchemaMismatch { .. }
            | CliError::NonMonotoneDates { .. }
            | CliError::MissingArtifacts(_)
            | CliError::Io { .. }
            | CliError::Csv { .. } => 2,
            CliError::Internal(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
