use thiserror::Error;

/// Errors raised across the training stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("reset error: {0}")]
    Reset(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("optimizer error: non-finite gradient entry at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("model {model}: {source}")]
    Model {
        model: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_model(self, model: usize) -> Self {
        Error::Model {
            model,
            source: Box::new(self),
        }
    }

    /// True for errors detected before any training work was done.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Dimension { .. } => true,
            Error::Model { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
