use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error class, used by callers that need to map failures onto
/// exit codes or retry policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Schema,
    Provider,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("{message} at line {line}")]
    Line { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no feature stored for frame {frame}, region {region}")]
    MissingFeature { frame: u64, region: String },

    #[error("region has no provenance tag; the synthetic provider cannot identify it")]
    MissingProvenance,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },

    #[error("service returned HTTP {0}")]
    Status(u16),

    #[error("unparsable service reply: {0}")]
    Body(String),
}

impl Error {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } | Error::Line { .. } | Error::MissingFeature { .. } => {
                ErrorClass::Input
            }
            Error::Schema { .. } | Error::InvalidArgument(_) | Error::InvalidGeometry(_) => {
                ErrorClass::Schema
            }
            Error::Transport(_) | Error::Timeout { .. } | Error::Status(_) | Error::Body(_) => {
                ErrorClass::Provider
            }
            Error::DimensionMismatch { .. } | Error::NonFinite(_) | Error::MissingProvenance => {
                ErrorClass::Internal
            }
        }
    }
}
