use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("input: {0}")]
    Input(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Other(String),
}

/// Where a core error came from decides how it is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Config,
    Input,
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Io { .. } | CliError::Other(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Input(_) => 4,
            CliError::NonConvergence(_) => 5,
        })
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn core(err: zefoz::Error, origin: Origin) -> Self {
        match err {
            zefoz::Error::NoConvergence { .. } | zefoz::Error::EigenNoConvergence { .. } => {
                CliError::NonConvergence(err.to_string())
            }
            _ => match origin {
                Origin::Config => CliError::Config(err.to_string()),
                Origin::Input => CliError::Input(err.to_string()),
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
