use std::path::PathBuf;

use lilsde_core::ErrorClass;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] lilsde_core::Error),
    /// Outputs were written but the optimizer missed its tolerance.
    #[error("not converged: {0}")]
    NotConverged(String),
}

impl LabError {
    /// 2 config, 3 domain, 4 numerical, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Io { .. } => 1,
            LabError::Core(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Domain => 3,
                ErrorClass::Numerical => 4,
            },
            LabError::NotConverged(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
        let path = path.into();
        move |source| LabError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
