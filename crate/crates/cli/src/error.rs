use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] mbmlmc::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, msg: impl Into<String>) -> CliError {
        CliError::Data { path: path.into(), msg: msg.into() }
    }

    /// 2 for configuration problems, 3 for solver failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_solver_failure() => 3,
            CliError::Core(
                mbmlmc::Error::InvalidDomain(_)
                | mbmlmc::Error::NonTilingEdge { .. }
                | mbmlmc::Error::InvalidParams(_)
                | mbmlmc::Error::InvalidMaterial(_)
                | mbmlmc::Error::InvalidPoisson(_)
                | mbmlmc::Error::NonNestedSizes(_)
                | mbmlmc::Error::UntaggedBoundary(..)
                | mbmlmc::Error::RegionUnresolved(_),
            ) => 2,
            _ => 1,
        }
    }
}
