use std::path::PathBuf;

/// Errors produced anywhere in the generation and evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed file structure (missing PLY property, bad header, ...).
    #[error("format error: {0}")]
    Format(String),

    /// Payload shorter than its header promises.
    #[error("length error: {0}")]
    Length(String),

    /// Numerically invalid content (non-finite values, zero quaternions, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("sampling error in frame {frame_index}: {message}")]
    Sampling { frame_index: u64, message: String },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Caller violated an API contract (e.g. mismatched buffer sizes).
    #[error("contract error: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True when the error stems from user-supplied input rather than an
    /// internal failure. The CLI maps this onto its exit codes.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            Error::Contract(_) | Error::Io(_) | Error::Image(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
