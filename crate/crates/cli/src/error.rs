use std::io;
use std::path::PathBuf;

use impact_game_core::Error as CoreError;
use thiserror::Error;

/// Failures surfaced by the command line tool, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{context}: {message}")]
    Invalid { context: String, message: String },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{failed} of {total} checks failed")]
    VerifyFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn core(context: impl Into<String>, source: CoreError) -> Self {
        CliError::Core {
            context: context.into(),
            source,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(origin: &str, err: serde_json::Error) -> Self {
        let (line, column) = (err.line(), err.column());
        let full = err.to_string();
        let suffix = format!(" at line {line} column {column}");
        let message = full.strip_suffix(&suffix).unwrap_or(&full).to_string();
        CliError::Parse {
            origin: origin.to_string(),
            line,
            column,
            message,
        }
    }

    /// 0 is success; 1 an inadmissible configuration; 2 a numerical failure;
    /// 64 a usage error; 74 an I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Parse { .. } | CliError::Invalid { .. } => 1,
            CliError::Core { source, .. } if source.is_validation() => 1,
            CliError::Core { .. } | CliError::VerifyFailed { .. } => 2,
            CliError::Io { .. } => 74,
        }
    }
}
