//! The latent-action MDP: an environment whose actions are the initial noise
//! of a generative policy.
//!
//! This crate only knows the generative policy through [`PolicyMap`], the
//! `(state, noise) -> action` query. It has no access to weights or to any
//! intermediate denoising state, and neither does anything built on top of it
//! that does not also link the policy implementation crate.

mod env;
mod mdp;
mod noise;
mod policy_map;

pub use env::{Env, EnvError, StepOutcome};
pub use mdp::{discounted_sum, ChunkStep, LatentActionMdp, LatentError};
pub use noise::{noise_broadcast, NoiseBox, NoiseBoxError};
pub use policy_map::{PolicyMap, QueryError};
