use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("big-M {big_m} too small: {bound} requires at least {required}")]
    BigMTooSmall { bound: String, required: f64, big_m: f64 },

    #[error("reports were computed on different lattices ({left:#018x} vs {right:#018x})")]
    ProvenanceMismatch { left: u64, right: u64 },

    #[error("indicator propagation failed at {var}: {reason}")]
    Propagation { var: String, reason: String },

    #[error("LP parse error at line {line}: {message}")]
    LpParse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
