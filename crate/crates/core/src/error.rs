use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("PLY parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("colorless cloud: vertex element has no red/green/blue (or r/g/b) uchar properties")]
    ColorlessCloud,

    #[error("truncated file: header declares {expected} vertices but only {found} could be read")]
    Truncated { expected: usize, found: usize },

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("length mismatch: expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("not enough points: k = {k} neighbours requested but the distorted cloud has {m} points")]
    NotEnoughPoints { k: usize, m: usize },

    #[error("saliency backend error: {0}")]
    Saliency(String),

    #[error("pooling error: {0}")]
    Pooling(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("logistic fit error: {0}")]
    Fit(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
