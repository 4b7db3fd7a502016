use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("point coincides with a singularity center")]
    Singular,

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("harvest budget exhausted: found {found} of {wanted} states")]
    Budget { found: usize, wanted: usize },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("not supported: {0}")]
    NotSupported(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
