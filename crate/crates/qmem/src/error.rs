use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] qmem_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    /// 2 for malformed input, 3 for calibration, 4 for estimation, 1 for
    /// operating-system I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(e) => e.exit_code(),
            AppError::Json { .. } | AppError::Csv { .. } => 2,
            AppError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }
}
