use std::path::PathBuf;

/// Failures of the front end. Validation problems exit with 1, everything
/// else with 2.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fdia_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_validation(&self) -> bool {
        match self {
            AppError::Config(_) => true,
            AppError::Core(e) => e.is_validation(),
            _ => false,
        }
    }

    /// Short class name printed on the diagnostic stream.
    pub fn class(&self) -> &'static str {
        match self {
            AppError::Config(_) => "config",
            AppError::Core(e) if e.is_validation() => "validation",
            AppError::Core(_) => "numerical",
            AppError::Io { .. } => "io",
            AppError::Format(_) => "format",
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            1
        } else {
            2
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
