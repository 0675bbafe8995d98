use dsrl_numerics::Activation;

use crate::{AgentError, Aggregation, Result};

/// Hyperparameters shared by both agents. Defaults follow the online setting.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub state_dim: usize,
    pub latent_dim: usize,
    /// Dimension of a decoded action chunk (`Q^A` input); unused by SAC.
    pub action_dim: usize,
    pub half_width: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub layer_norm: bool,
    pub num_critics: usize,
    pub aggregation: Aggregation,
    pub qw_critics: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub tau: f64,
    pub init_alpha: f64,
    pub learn_alpha: bool,
    pub target_entropy: f64,
}

impl AgentConfig {
    pub fn new(state_dim: usize, latent_dim: usize, action_dim: usize) -> Self {
        Self {
            state_dim,
            latent_dim,
            action_dim,
            half_width: 1.5,
            hidden: vec![256, 256, 256],
            activation: Activation::Gelu,
            layer_norm: true,
            num_critics: 2,
            aggregation: Aggregation::Min,
            qw_critics: 2,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            tau: 0.005,
            init_alpha: 1.0,
            learn_alpha: true,
            target_entropy: 0.0,
        }
    }

    /// Offline defaults: ten mean-aggregated critics and a narrower box.
    pub fn offline(state_dim: usize, latent_dim: usize, action_dim: usize) -> Self {
        Self {
            half_width: 0.75,
            num_critics: 10,
            aggregation: Aggregation::Mean,
            ..Self::new(state_dim, latent_dim, action_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AgentError::Config(msg));
        if self.state_dim == 0 || self.latent_dim == 0 {
            return bad("state and latent dims must be positive".into());
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return bad(format!("half_width {}", self.half_width));
        }
        if self.num_critics == 0 || self.qw_critics == 0 {
            return bad("critic counts must be positive".into());
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau {} outside (0, 1)", self.tau));
        }
        if self.learn_alpha && !(self.init_alpha > 0.0) {
            return bad(format!("init_alpha {} must be positive", self.init_alpha));
        }
        if self.init_alpha < 0.0 {
            return bad(format!("init_alpha {}", self.init_alpha));
        }
        Ok(())
    }
}

/// Scalar summaries of one gradient step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateMetrics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub q_mean: f64,
    /// Distillation loss, present on steps that train `Q^W`.
    pub qw_loss: Option<f64>,
}

pub(crate) fn put_config(c: &mut dsrl_numerics::Checkpoint, cfg: &AgentConfig) {
    c.put_u64("config.state_dim", cfg.state_dim as u64);
    c.put_u64("config.latent_dim", cfg.latent_dim as u64);
    c.put_u64("config.action_dim", cfg.action_dim as u64);
    c.put_f64("config.hidden", &cfg.hidden.iter().map(|&h| h as f64).collect::<Vec<_>>());
    c.put_u64("config.activation", cfg.activation.code() as u64);
    c.put_u64("config.layer_norm", cfg.layer_norm as u64);
    c.put_u64("config.num_critics", cfg.num_critics as u64);
    c.put_u64("config.aggregation", cfg.aggregation.code());
    c.put_u64("config.qw_critics", cfg.qw_critics as u64);
    c.put_u64("config.learn_alpha", cfg.learn_alpha as u64);
    c.put_f64(
        "config.scalars",
        &[
            cfg.half_width,
            cfg.actor_lr,
            cfg.critic_lr,
            cfg.alpha_lr,
            cfg.tau,
            cfg.init_alpha,
            cfg.target_entropy,
        ],
    );
}

pub(crate) fn get_config(c: &dsrl_numerics::Checkpoint) -> Result<AgentConfig> {
    let err = |e: dsrl_numerics::NumericsError| AgentError::Checkpoint(e.to_string());
    let u = |name: &str| c.u64(name).map_err(err);
    let s = c.f64s("config.scalars").map_err(err)?;
    if s.len() != 7 {
        return Err(AgentError::Checkpoint("config.scalars has the wrong length".into()));
    }
    let activation = Activation::from_code(u("config.activation")? as u8)
        .ok_or_else(|| AgentError::Checkpoint("unknown activation".into()))?;
    let aggregation = Aggregation::from_code(u("config.aggregation")?)
        .ok_or_else(|| AgentError::Checkpoint("unknown aggregation".into()))?;
    let cfg = AgentConfig {
        state_dim: u("config.state_dim")? as usize,
        latent_dim: u("config.latent_dim")? as usize,
        action_dim: u("config.action_dim")? as usize,
        half_width: s[0],
        hidden: c.f64s("config.hidden").map_err(err)?.iter().map(|&h| h as usize).collect(),
        activation,
        layer_norm: u("config.layer_norm")? != 0,
        num_critics: u("config.num_critics")? as usize,
        aggregation,
        qw_critics: u("config.qw_critics")? as usize,
        actor_lr: s[1],
        critic_lr: s[2],
        alpha_lr: s[3],
        tau: s[4],
        init_alpha: s[5],
        learn_alpha: u("config.learn_alpha")? != 0,
        target_entropy: s[6],
    };
    cfg.validate()?;
    Ok(cfg)
}
