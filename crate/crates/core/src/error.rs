use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
///
/// Variants are grouped so the command-line front end can map them onto its
/// stable exit codes (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for this error class.
    ///
    /// 2 configuration / invalid input, 3 I/O or file format, 4 generation,
    /// 5 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::Generation(_) => 4,
            Error::Numerical(_) => 5,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
