use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid skeleton: {0}")]
    Validation(String),

    #[error("invalid bone geometry: {0}")]
    InvalidGeometry(String),

    #[error("infeasible length {length} for bone `{bone}`: {reason}")]
    InfeasibleLength {
        bone: String,
        length: f64,
        reason: String,
    },

    #[error("bone `{bone}` has no assigned points")]
    EmptyAssignment { bone: String },

    #[error("no rotation of bone `{bone}` captured any point")]
    NoPointsCaptured { bone: String },

    #[error("{path}: file carries no normals (use normal estimation)")]
    MissingNormals { path: PathBuf },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
