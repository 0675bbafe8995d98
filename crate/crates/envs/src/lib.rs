//! Desk-scale tasks, scripted demonstrators and the transition dataset format.

mod bandit;
mod chain;
mod dataset;
mod demos;
mod point_mass;

pub use bandit::BanditEnv;
pub use chain::{ChainMdp, ChainValues, ThresholdDecoder};
pub use dataset::{Dataset, DatasetError, EnvId, Transition, DATASET_MAGIC, DATASET_VERSION};
pub use demos::{generate_demos, DemoError, ScriptedController, ScriptedPolicy};
pub use point_mass::{PointMassConfig, PointMassEnv};
