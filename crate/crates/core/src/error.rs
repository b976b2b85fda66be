use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedImage { path: PathBuf, reason: String },
    #[error("failed to decode {path}: {reason}")]
    CorruptImage { path: PathBuf, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("view count mismatch: {rgb} rgb images vs {nir} nir images")]
    ViewCountMismatch { rgb: usize, nir: usize },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("cloud has no nir appearance")]
    MissingNir,
    #[error("stale contributor cache: forward pass does not match the cloud")]
    StaleCache,
    #[error("empty patch set")]
    EmptyPatchSet,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
