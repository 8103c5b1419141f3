use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("network has no edges")]
    NoEdges,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("label mask misses class {class} after repeated resampling")]
    ClassCoverage { class: usize },

    #[error("not enough absent pairs to sample {needed} negatives (only {available})")]
    NotEnoughNegatives { needed: usize, available: usize },

    #[error("non-finite objective at epoch {epoch}: {dump}")]
    NonFinite { epoch: usize, dump: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
