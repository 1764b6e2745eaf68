use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invariant violated at location {id}: {msg}")]
    Invariant { id: u32, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown location id {0}")]
    UnknownLocation(u32),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Short category used by the command-line error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => "parse",
            Error::Invariant { .. } => "invariant",
            Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::UnknownLocation(_) => {
                "input"
            }
            Error::Diverged { .. } => "training",
            Error::Context { source, .. } => source.category(),
            Error::Io(_) => "io",
        }
    }
}
