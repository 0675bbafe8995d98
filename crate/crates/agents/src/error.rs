use dsrl_latent::QueryError;
use dsrl_numerics::NumericsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("policy query failed: {0}")]
    Query(#[from] QueryError),
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch rows carry no latent actions")]
    MissingLatent,
    #[error("{what} has dimension {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> AgentError {
    AgentError::Dimension {
        what,
        expected,
        got,
    }
}
