use dsrl_numerics::Checkpoint;
use rand::Rng;

use crate::ckpt::{get_actor, get_critics, get_temperature, put_actor, put_critics, put_temperature};
use crate::config::{get_config, put_config};
use crate::{AgentConfig, AgentError, Batch, CriticEnsemble, Result, SquashedGaussianActor, Temperature, UpdateMetrics};

pub(crate) fn finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(AgentError::NonFinite(what))
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Soft actor-critic run directly on the latent-action MDP: both the actor
/// and the critics live in noise space.
#[derive(Debug, Clone)]
pub struct SacAgent {
    config: AgentConfig,
    actor: SquashedGaussianActor,
    critics: CriticEnsemble,
    temperature: Temperature,
    updates: u64,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let actor = SquashedGaussianActor::new(
            c.state_dim,
            c.latent_dim,
            c.half_width,
            &c.hidden,
            c.activation,
            c.layer_norm,
            c.actor_lr,
            rng,
        )?;
        let critics = CriticEnsemble::new(
            c.state_dim,
            c.latent_dim,
            c.num_critics,
            &c.hidden,
            c.activation,
            c.layer_norm,
            c.critic_lr,
            c.aggregation,
            true,
            rng,
        )?;
        let temperature = if c.learn_alpha {
            Temperature::learned(c.init_alpha, c.target_entropy, c.alpha_lr)
        } else {
            Temperature::fixed(c.init_alpha)
        };
        Ok(Self {
            config,
            actor,
            critics,
            temperature,
            updates: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn actor(&self) -> &SquashedGaussianActor {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut SquashedGaussianActor {
        &mut self.actor
    }

    pub fn critics(&self) -> &CriticEnsemble {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut CriticEnsemble {
        &mut self.critics
    }

    pub fn temperature(&self) -> &Temperature {
        &self.temperature
    }

    pub fn set_temperature(&mut self, temperature: Temperature) {
        self.temperature = temperature;
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn act<R: Rng + ?Sized>(&self, states: &[f64], n: usize, deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        if deterministic {
            self.actor.deterministic(states, n)
        } else {
            Ok(self.actor.sample(states, n, rng)?.w)
        }
    }

    /// `r + discount * (1 - done) * (agg Q_target(s', w') - alpha * log pi(w'|s'))`
    /// with `w'` freshly drawn from the current actor.
    pub fn critic_target<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Vec<f64>> {
        let n = batch.len;
        let next = self.actor.sample(&batch.next_states, n, rng)?;
        let q_next = self.critics.target_q(&batch.next_states, &next.w, n)?;
        let alpha = self.temperature.alpha();
        Ok((0..n)
            .map(|r| {
                let soft = q_next[r] - alpha * next.logp[r];
                batch.rewards[r] + batch.discounts[r] * (1.0 - batch.dones[r]) * soft
            })
            .collect())
    }

    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<UpdateMetrics> {
        let n = batch.len;
        let latents = batch.latents()?;
        let y = self.critic_target(batch, rng)?;
        let critic_loss = finite(self.critics.update(&batch.states, latents, &y, n)?, "critic loss")?;

        let alpha = self.temperature.alpha();
        let sample = self.actor.sample(&batch.states, n, rng)?;
        let (q, dq) = self.critics.input_gradient(&batch.states, &sample.w, n)?;
        let actor_loss = finite(
            (0..n).map(|r| alpha * sample.logp[r] - q[r]).sum::<f64>() / n as f64,
            "actor loss",
        )?;
        let grads = self.actor.gradient(&sample, &dq, alpha)?;
        self.actor.apply_gradient(&grads)?;
        let alpha_loss = finite(self.temperature.update(&sample.logp)?, "temperature loss")?;
        self.critics.polyak(self.config.tau)?;
        self.updates += 1;
        Ok(UpdateMetrics {
            critic_loss,
            actor_loss,
            alpha_loss,
            alpha: self.temperature.alpha(),
            entropy: -mean(&sample.logp),
            q_mean: mean(&q),
            qw_loss: None,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.put_u64("agent.kind", 0);
        c.put_u64("agent.updates", self.updates);
        put_config(&mut c, &self.config);
        put_actor(&mut c, "actor", &self.actor);
        put_critics(&mut c, "critic", &self.critics, self.config.state_dim);
        put_temperature(&mut c, "temperature", &self.temperature);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.u64("agent.kind").ok() != Some(0) {
            return Err(AgentError::Checkpoint("not a DSRL-SAC checkpoint".into()));
        }
        Ok(Self {
            config: get_config(c)?,
            actor: get_actor(c, "actor")?,
            critics: get_critics(c, "critic")?,
            temperature: get_temperature(c, "temperature")?,
            updates: c.u64("agent.updates").map_err(|e| AgentError::Checkpoint(e.to_string()))?,
        })
    }
}
