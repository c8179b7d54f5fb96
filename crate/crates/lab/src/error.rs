use std::path::PathBuf;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Core(#[from] mclab_core::Error),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for configuration and input problems, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Core(mclab_core::Error::InvalidParameter(_)) => 1,
            LabError::Core(_) => 2,
            _ => 1,
        }
    }
}

macro_rules! config_err {
    ($($arg:tt)*) => {
        $crate::error::LabError::Config(format!($($arg)*))
    };
}
pub(crate) use config_err;
