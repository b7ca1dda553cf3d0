use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input data. `line` is 1-based when present.
    #[error("{}", format_location(.path, *.line, .message))]
    Format {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error("numeric failure at step {step}: {message}")]
    Numeric { step: usize, message: String },
}

fn format_location(path: &Option<PathBuf>, line: Option<usize>, message: &str) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!("{}:{}: {}", p.display(), l, message),
        (Some(p), None) => format!("{}: {}", p.display(), message),
        (None, Some(l)) => format!("line {}: {}", l, message),
        (None, None) => message.to_string(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format_at(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: Some(path.into()),
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn format(message: impl Into<String>) -> Self {
        Error::Format {
            path: None,
            line: None,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }

    /// Prefixes the message with `what`, keeping the kind.
    pub fn context(self, what: &str) -> Self {
        match self {
            Error::Io { path, source } => Error::Io {
                path: PathBuf::from(format!("{what}: {}", path.display())),
                source,
            },
            Error::Format { path, line, message } => Error::Format {
                path,
                line,
                message: format!("{what}: {message}"),
            },
            Error::Usage(m) => Error::Usage(format!("{what}: {m}")),
            Error::Numeric { step, message } => Error::Numeric {
                step,
                message: format!("{what}: {message}"),
            },
        }
    }
}
