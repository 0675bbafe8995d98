use dsrl_envs::Dataset;
use dsrl_latent::Env;
use dsrl_policy::{BcBatch, DiffusionConfig, DiffusionPolicy, FlowConfig, FlowPolicy, GenerativePolicy};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::parse_activation;
use crate::{make_env, EnvConfig, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Diffusion,
    Flow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub family: Family,
    pub chunk_len: usize,
    pub hidden: Vec<usize>,
    pub activation: String,
    pub layer_norm: bool,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Diffusion only.
    pub inference_steps: usize,
    /// Flow only.
    pub euler_steps: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            family: Family::Diffusion,
            chunk_len: 1,
            hidden: vec![64, 64],
            activation: "gelu".into(),
            layer_norm: false,
            lr: 1e-3,
            steps: 4000,
            batch_size: 256,
            inference_steps: 8,
            euler_steps: 10,
            seed: 0,
        }
    }
}

enum Model {
    Diffusion(DiffusionPolicy),
    Flow(FlowPolicy),
}

/// Behavioral cloning on `dataset`; returns the policy and the per-step
/// training losses.
pub fn pretrain(dataset: &Dataset, env: &EnvConfig, cfg: &PretrainConfig) -> Result<(GenerativePolicy, Vec<f64>), HarnessError> {
    let probe = make_env(env, 0);
    if dataset.state_dim != probe.state_dim() || dataset.action_dim != probe.action_dim() {
        return Err(HarnessError::Config(format!(
            "dataset is {}x{}, environment is {}x{}",
            dataset.state_dim,
            dataset.action_dim,
            probe.state_dim(),
            probe.action_dim()
        )));
    }
    if dataset.is_empty() || cfg.steps == 0 || cfg.batch_size == 0 || cfg.chunk_len == 0 {
        return Err(HarnessError::Config("pretraining needs data, steps, batch size and chunk length".into()));
    }
    let activation = parse_activation(&cfg.activation)?;
    let (low, high) = (probe.action_low(), probe.action_high());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = match cfg.family {
        Family::Diffusion => {
            let mut c = DiffusionConfig::new(dataset.state_dim, &low, &high);
            c.chunk_len = cfg.chunk_len;
            c.hidden = cfg.hidden.clone();
            c.activation = activation;
            c.layer_norm = cfg.layer_norm;
            c.lr = cfg.lr;
            c.inference_steps = cfg.inference_steps;
            Model::Diffusion(DiffusionPolicy::new(&c, &mut rng)?)
        }
        Family::Flow => {
            let mut c = FlowConfig::new(dataset.state_dim, &low, &high);
            c.chunk_len = cfg.chunk_len;
            c.hidden = cfg.hidden.clone();
            c.activation = activation;
            c.layer_norm = cfg.layer_norm;
            c.lr = cfg.lr;
            c.euler_steps = cfg.euler_steps;
            Model::Flow(FlowPolicy::new(&c, &mut rng)?)
        }
    };
    let (states, actions, n) = dataset.bc_pairs(cfg.chunk_len);
    let (sd, ld) = (dataset.state_dim, dataset.action_dim * cfg.chunk_len);
    let b = cfg.batch_size.min(n);
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let idx = sample(&mut rng, n, b);
        let mut bs = Vec::with_capacity(b * sd);
        let mut ba = Vec::with_capacity(b * ld);
        for i in idx.iter() {
            bs.extend_from_slice(&states[i * sd..(i + 1) * sd]);
            ba.extend_from_slice(&actions[i * ld..(i + 1) * ld]);
        }
        let batch = BcBatch::new(bs, ba, b);
        let loss = match &mut model {
            Model::Diffusion(p) => p.bc_train_step(&batch, &mut rng)?,
            Model::Flow(p) => p.bc_train_step(&batch, &mut rng)?,
        };
        if !loss.is_finite() {
            return Err(HarnessError::NonFinite {
                message: "behavioral cloning loss".into(),
                dump: None,
            });
        }
        losses.push(loss);
    }
    let policy = match model {
        Model::Diffusion(p) => GenerativePolicy::Diffusion(p),
        Model::Flow(p) => GenerativePolicy::Flow(p),
    };
    Ok((policy, losses))
}
