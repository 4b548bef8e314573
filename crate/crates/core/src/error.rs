use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown method `{0}`")]
    NotFound(String),

    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("unsupported stage structure: {0}")]
    UnsupportedStructure(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Newton iteration failed to converge in {iterations} iterations (stage {stage}, residual {residual:e})")]
    NewtonDiverged {
        stage: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("singular Newton matrix at stage {0}")]
    SingularMatrix(usize),

    #[error("slope fit needs at least 3 usable points, found {0}")]
    InsufficientPoints(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
