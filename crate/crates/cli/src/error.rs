use std::fmt::Display;
use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("mode `{mode}` requires a [{block}] block")]
    MissingBlock {
        mode: &'static str,
        block: &'static str,
    },
    #[error("invalid config at `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn invalid(key: impl Into<String>, message: impl Display) -> Self {
        CliError::Invalid {
            key: key.into(),
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl Display) -> Self {
        CliError::Runtime(message.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigRead { .. }
            | CliError::Parse { .. }
            | CliError::MissingBlock { .. }
            | CliError::Invalid { .. } => EXIT_CONFIG,
            CliError::Write { .. } | CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}
