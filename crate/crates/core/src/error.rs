//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("template error: {0}")]
    Template(String),
    #[error("vqa backend error: {0}")]
    Backend(String),
    #[error("encoder error: {0}")]
    Encoder(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cosine similarity undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("missing corpus record for image `{image_id}` class {class_id}")]
    MissingCorpus { image_id: String, class_id: u32 },
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Attach a path to an I/O error.
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
