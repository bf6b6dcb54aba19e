use thiserror::Error;

use crate::policy::PromptId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no table entry for prompt {prompt} with context {context:?}")]
    MissingContext { prompt: PromptId, context: Vec<u32> },

    #[error("sequence space of size {size} exceeds enumeration cap {cap}")]
    EnumerationTooLarge { size: u128, cap: u64 },

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("geometric mixture weights underflow at lambda = {lambda}")]
    Underflow { lambda: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("group of size {0} is too small, need at least 2")]
    GroupTooSmall(usize),

    #[error("policy is frozen and cannot be updated")]
    FrozenPolicy,

    #[error("domain `{0}` has an empty prompt pool")]
    EmptyDomainPool(String),

    #[error("task encoding overflow: {0}")]
    EncodingOverflow(String),

    #[error("payload length {length} does not fit horizon {horizon}")]
    LengthOverflow { length: usize, horizon: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("training aborted at step {step}: {reason}")]
    TrainingAborted {
        step: u64,
        reason: String,
        /// Checkpoint text of the last finite state.
        checkpoint: Box<String>,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
