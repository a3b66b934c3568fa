use std::fmt::Display;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Process exit statuses. Clap itself exits with 2 on bad flags.
pub mod exit {
    pub const OK: u8 = 0;
    pub const OTHER: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const VERSION: u8 = 4;
    pub const INVALID: u8 = 5;
    pub const RUN: u8 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: no such file or directory", .0.display())]
    Missing(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: unsupported format version `{found}` (expected `{expected}`)", path.display())]
    Version {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("{context}: {reason}")]
    Invalid { context: String, reason: String },

    #[error("run failed: {0}")]
    Run(String),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Missing(_) | CliError::Io { .. } => exit::IO,
            CliError::Version { .. } => exit::VERSION,
            CliError::Invalid { .. } => exit::INVALID,
            CliError::Run(_) => exit::RUN,
            CliError::Other(_) => exit::OTHER,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        let path = path.as_ref().to_path_buf();
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::Missing(path)
        } else {
            CliError::Io { path, source }
        }
    }

    pub fn invalid(context: impl Display, reason: impl Display) -> Self {
        CliError::Invalid {
            context: context.to_string(),
            reason: reason.to_string(),
        }
    }
}

/// Attributes a core error to the file it came from.
pub fn from_core(path: impl AsRef<Path>) -> impl FnOnce(hmix_core::Error) -> CliError {
    move |e| {
        let path = path.as_ref();
        match e {
            hmix_core::Error::Io(source) => CliError::io(path, source),
            hmix_core::Error::Version { found, expected } => CliError::Version {
                path: path.to_path_buf(),
                found,
                expected,
            },
            other => CliError::invalid(path.display(), other),
        }
    }
}

/// For core errors raised while running an already validated command.
pub fn run_failure(e: hmix_core::Error) -> CliError {
    CliError::Run(e.to_string())
}
