//! Latent-noise actor-critic agents: SAC on the latent-action MDP and the
//! noise-aliased two-critic variant.

mod actor;
mod audit;
mod buffer;
mod ckpt;
mod config;
mod critic;
mod error;
mod na;
mod sac;
mod temperature;

pub use actor::{log_one_minus_tanh_sq, ActorSample, SquashedGaussianActor, LOG_STD_MAX, LOG_STD_MIN};
pub use audit::QueryAudit;
pub use buffer::{Batch, Origin, Record, ReplayBuffer, SharedReplayBuffer};
pub use config::{AgentConfig, UpdateMetrics};
pub use critic::{Aggregation, CriticEnsemble};
pub use error::AgentError;
pub use na::NaAgent;
pub use sac::SacAgent;
pub use temperature::Temperature;

pub type Result<T> = std::result::Result<T, AgentError>;

/// Either agent behind one interface for the training loops.
#[derive(Debug, Clone)]
pub enum Agent {
    Sac(SacAgent),
    Na(NaAgent),
}

impl Agent {
    pub fn config(&self) -> &AgentConfig {
        match self {
            Agent::Sac(a) => a.config(),
            Agent::Na(a) => a.config(),
        }
    }

    pub fn actor(&self) -> &SquashedGaussianActor {
        match self {
            Agent::Sac(a) => a.actor(),
            Agent::Na(a) => a.actor(),
        }
    }

    pub fn act<R: rand::Rng + ?Sized>(&self, states: &[f64], n: usize, deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Agent::Sac(a) => a.act(states, n, deterministic, rng),
            Agent::Na(a) => a.act(states, n, deterministic, rng),
        }
    }

    pub fn to_checkpoint(&self) -> dsrl_numerics::Checkpoint {
        match self {
            Agent::Sac(a) => a.to_checkpoint(),
            Agent::Na(a) => a.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(c: &dsrl_numerics::Checkpoint) -> Result<Self> {
        match c.u64("agent.kind") {
            Ok(0) => Ok(Agent::Sac(SacAgent::from_checkpoint(c)?)),
            Ok(1) => Ok(Agent::Na(NaAgent::from_checkpoint(c)?)),
            _ => Err(AgentError::Checkpoint("unknown agent kind".into())),
        }
    }
}
