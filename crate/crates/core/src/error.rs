use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("i/o failure on {}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("rank too low: {0}")]
    RankTooLow(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("instance too large for exact enumeration: {0}")]
    TooLarge(String),

    #[error("degenerate optimum: {0}")]
    DegenerateOptimum(String),

    #[error("degenerate affinity: {0}")]
    DegenerateAffinity(String),

    #[error("missing positive class: {0}")]
    MissingPositiveClass(String),

    #[error("unknown image id: {0}")]
    UnknownId(String),

    #[error("malformed file {}: {message}", path.display())]
    MalformedFile { path: PathBuf, message: String },
}

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidConfig(_) | InvalidArg(_) | MissingPositiveClass(_) | TooLarge(_) => {
                ErrorClass::Config
            }
            MissingFile(_)
            | DimensionMismatch(_)
            | MalformedManifest(_)
            | UnsupportedFormat(_)
            | IoFailure { .. }
            | ShapeMismatch(_)
            | UnknownId(_)
            | MalformedFile { .. } => ErrorClass::Data,
            NumericalFailure(_)
            | RankDeficient(_)
            | RankTooLow(_)
            | DegenerateInput(_)
            | DegenerateOptimum(_)
            | DegenerateAffinity(_) => ErrorClass::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::MalformedFile {
            path: path.into(),
            message: message.into(),
        }
    }
}
