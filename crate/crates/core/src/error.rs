use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("enumeration of {what} needs {size} entries, above the cap of {cap}")]
    CapExceeded { what: String, size: u128, cap: u128 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("game has no stage potential")]
    MissingPotential,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("certificate is not certified")]
    Uncertified,

    #[error("game cannot be reduced to a normal form: {0}")]
    NotReducible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by the user's configuration rather than the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse(_))
    }
}
