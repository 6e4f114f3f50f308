use std::path::PathBuf;

use heatalloc_core::domain::Violation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: invalid configuration: {field}: {reason}")]
    Config {
        path: PathBuf,
        field: String,
        reason: String,
    },
    #[error("{0}")]
    Usage(String),
    #[error("dataset failed validation:\n{}", list(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Core(heatalloc_core::Error),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

impl From<heatalloc_core::Error> for Error {
    fn from(e: heatalloc_core::Error) -> Self {
        match e {
            heatalloc_core::Error::InvalidDataset(v) => Error::Invalid(v),
            e => Error::Core(e),
        }
    }
}

impl Error {
    /// 2 for problems with what the user asked for, 1 for failures while
    /// doing it.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Read { .. } | Error::Parse { .. } | Error::Config { .. } | Error::Usage(_) => 2,
            Error::Write { .. } | Error::Invalid(_) | Error::Core(_) => 1,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
