use thiserror::Error;

/// Errors raised by the simulator, the oracles and the statistics helpers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or run configuration violates one or more constraints.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    /// The operation needs state that was not recorded.
    #[error("state error: {0}")]
    State(String),

    /// The requested combination of features is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A direct simulation exceeded its event budget.
    #[error("event budget of {limit} exceeded")]
    Overflow { limit: u64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }
}

pub type Result<T> = std::result::Result<T, Error>;
