use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: `{path}`: {msg}")]
    Invalid { path: String, msg: String },
    #[error("{file}: {source}")]
    InFile {
        file: String,
        #[source]
        source: Box<BenchError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] tolcone_core::Error),
    #[error(transparent)]
    Toy(#[from] tolcone_toyzoo::ToyError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        BenchError::InFile {
            file: path.display().to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
