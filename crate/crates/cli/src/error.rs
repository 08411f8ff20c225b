use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed metrics: {0}")]
    Metrics(String),

    #[error(transparent)]
    Core(mfgan_core::Error),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { key: key.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 1 for configuration problems (including parameters the solvers
    /// reject), 2 for numerical aborts, 3 for I/O and other failures.
    pub fn exit_code(&self) -> i32 {
        use mfgan_core::Error as E;
        match self {
            CliError::Config { .. } => 1,
            CliError::Core(E::InvalidArgument(_) | E::Shape { .. } | E::Empty(_)) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io { .. } | CliError::Metrics(_) | CliError::Core(_) => 3,
        }
    }
}

impl From<mfgan_core::Error> for CliError {
    fn from(e: mfgan_core::Error) -> Self {
        match e {
            mfgan_core::Error::NonFinite(msg) => CliError::Numerical(msg),
            other => CliError::Core(other),
        }
    }
}
