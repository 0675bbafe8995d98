//! Behavioral-cloning generative policies.
//!
//! [`DiffusionPolicy`] is an epsilon-prediction denoiser trained with the
//! standard DDPM objective and sampled deterministically with DDIM;
//! [`FlowPolicy`] is a rectified-flow velocity field integrated with Euler
//! steps. With the initial noise fixed both are pure functions of
//! `(state, noise)`, which is what [`dsrl_latent::PolicyMap`] exposes.

mod actions;
mod diffusion;
mod embedding;
mod error;
mod flow;
mod generative;
mod schedule;

pub use actions::ActionScaling;
pub use diffusion::{DiffusionConfig, DiffusionPolicy};
pub use embedding::{sinusoidal_embedding, TIME_EMBED_DIM};
pub use error::PolicyError;
pub use flow::{FlowConfig, FlowPolicy};
pub use generative::GenerativePolicy;
pub use schedule::{ddim_timesteps, NoiseSchedule, ReverseCoefficients};

pub type Result<T> = std::result::Result<T, PolicyError>;

/// State/action pairs for behavioral cloning, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BcBatch {
    pub states: Vec<f64>,
    /// Raw (unnormalized) action chunks.
    pub actions: Vec<f64>,
    pub len: usize,
}

impl BcBatch {
    pub fn new(states: Vec<f64>, actions: Vec<f64>, len: usize) -> Self {
        Self {
            states,
            actions,
            len,
        }
    }
}
