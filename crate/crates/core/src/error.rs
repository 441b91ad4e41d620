use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("write error on {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("NIfTI parse error: {0}")]
    Parse(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("expected a 3D image, got {0}")]
    Dimensionality(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid orientation: {0}")]
    Orientation(String),

    #[error("label {0} has no entry in the label mapping")]
    UnmappedLabel(u32),

    #[error("volume too small: {0}")]
    Size(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) => EXIT_USAGE,
            Error::Invariant(_) => EXIT_INTERNAL,
            _ => EXIT_DATA,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_taxonomy() {
        assert_eq!(Error::arg("x").exit_code(), EXIT_USAGE);
        assert_eq!(Error::config("x").exit_code(), EXIT_DATA);
        assert_eq!(Error::UnmappedLabel(9).exit_code(), EXIT_DATA);
        assert_eq!(Error::Parse("x".into()).exit_code(), EXIT_DATA);
        assert_eq!(Error::Invariant("x".into()).exit_code(), EXIT_INTERNAL);
    }
}
