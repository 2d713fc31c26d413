use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A model with zero norm was handed to cosine similarity.
    #[error("degenerate model: client {client} has a zero-norm parameter vector")]
    DegenerateModel { client: usize },

    #[error("partition failed: {0}")]
    Partition(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Non-finite loss or gradient during local training.
    #[error("divergence in round {round}, client {client}: {message}")]
    Divergence {
        round: usize,
        client: usize,
        message: String,
    },

    #[error("finite-difference oracle: {0}")]
    Oracle(String),

    #[error("invalid config field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation { .. })
    }
}
