use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Core(#[from] hcgst_core::Error),
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
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Config(String),
}

impl Error {
    /// Process exit code: 2 for bad configuration or input, 3 for failures
    /// while running or writing results.
    pub fn exit_code(&self) -> i32 {
        use hcgst_core::Error as E;
        match self {
            Error::Core(E::TrainingDiverged { .. } | E::SelectionDiverged { .. } | E::NonFinite(_)) => 3,
            Error::Write { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn read(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Read { path, source }
    }

    pub(crate) fn write(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Write { path, source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
