use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("{0}")]
    Domain(String),

    /// Inverse transform left an imaginary part larger than the configured tolerance.
    #[error("inverse DFT imaginary residue {residue:e} exceeds tolerance {tolerance:e}")]
    ImaginaryResidue { residue: f64, tolerance: f64 },

    #[error("cluster {cluster} is empty")]
    EmptyCluster { cluster: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("manifest error in {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("shape error in {path}: {message}")]
    Shape { path: PathBuf, message: String },

    #[error("parse error in {path} at row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable name of the error kind, used in CLI diagnostics.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DomainError",
            Error::ImaginaryResidue { .. } => "ImaginaryResidueError",
            Error::EmptyCluster { .. } => "EmptyClusterError",
            Error::LengthMismatch { .. } => "LengthMismatchError",
            Error::Config(_) => "ConfigError",
            Error::Manifest { .. } => "ManifestError",
            Error::Shape { .. } => "ShapeError",
            Error::Parse { .. } => "ParseError",
            Error::Io { .. } => "IoError",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
