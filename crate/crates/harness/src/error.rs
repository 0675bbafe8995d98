use std::io;
use std::path::PathBuf;

use dsrl_agents::AgentError;
use dsrl_envs::{DatasetError, DemoError};
use dsrl_latent::{LatentError, QueryError};
use dsrl_numerics::NumericsError;
use dsrl_policy::PolicyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("could not read config {path}: {source}")]
    ConfigFile {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("{what} mismatch: policy has {policy}, environment has {env}")]
    Mismatch {
        what: &'static str,
        policy: usize,
        env: usize,
    },
    #[error("non-finite value during training ({message}); diagnostics in {}", dump.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<not written>".into()))]
    NonFinite { message: String, dump: Option<PathBuf> },
    #[error(transparent)]
    Agent(AgentError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Demos(#[from] DemoError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("endpoint: {0}")]
    Endpoint(#[from] dsrl_endpoint::ServerError),
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl From<AgentError> for HarnessError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::NonFinite(what) => HarnessError::NonFinite {
                message: what.to_string(),
                dump: None,
            },
            e => HarnessError::Agent(e),
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
