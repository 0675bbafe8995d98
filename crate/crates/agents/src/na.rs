use dsrl_latent::{NoiseBox, PolicyMap};
use dsrl_numerics::Checkpoint;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ckpt::{get_actor, get_critics, get_temperature, put_actor, put_critics, put_temperature};
use crate::config::{get_config, put_config};
use crate::error::dim;
use crate::sac::{finite, mean};
use crate::{
    AgentConfig, AgentError, Aggregation, Batch, CriticEnsemble, QueryAudit, Result, SquashedGaussianActor,
    Temperature, UpdateMetrics,
};

/// Noise-aliased agent: `Q^A` learns by TD in the original action space,
/// `Q^W` is distilled from it through the generative policy, and the latent
/// actor climbs `Q^W`.
#[derive(Debug, Clone)]
pub struct NaAgent {
    config: AgentConfig,
    actor: SquashedGaussianActor,
    qa: CriticEnsemble,
    qw: CriticEnsemble,
    temperature: Temperature,
    noise_box: NoiseBox,
    audit: Option<QueryAudit>,
    updates: u64,
}

impl NaAgent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if config.action_dim == 0 {
            return Err(AgentError::Config("action_dim must be positive".into()));
        }
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
        let qa = CriticEnsemble::new(
            c.state_dim,
            c.action_dim,
            c.num_critics,
            &c.hidden,
            c.activation,
            c.layer_norm,
            c.critic_lr,
            c.aggregation,
            true,
            rng,
        )?;
        let qw = CriticEnsemble::new(
            c.state_dim,
            c.latent_dim,
            c.qw_critics,
            &c.hidden,
            c.activation,
            c.layer_norm,
            c.critic_lr,
            Aggregation::Mean,
            false,
            rng,
        )?;
        let temperature = if c.learn_alpha {
            Temperature::learned(c.init_alpha, c.target_entropy, c.alpha_lr)
        } else {
            Temperature::fixed(c.init_alpha)
        };
        let noise_box = NoiseBox::new(c.half_width, c.latent_dim).map_err(|e| AgentError::Config(e.to_string()))?;
        Ok(Self {
            config,
            actor,
            qa,
            qw,
            temperature,
            noise_box,
            audit: None,
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

    pub fn qa(&self) -> &CriticEnsemble {
        &self.qa
    }

    pub fn qa_mut(&mut self) -> &mut CriticEnsemble {
        &mut self.qa
    }

    pub fn qw(&self) -> &CriticEnsemble {
        &self.qw
    }

    pub fn qw_mut(&mut self) -> &mut CriticEnsemble {
        &mut self.qw
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

    /// Starts recording the provenance of every `Q^A` query point.
    pub fn enable_audit<'a>(&mut self, dataset_actions: impl IntoIterator<Item = &'a [f64]>) {
        self.audit = Some(QueryAudit::new(dataset_actions, self.config.half_width));
    }

    pub fn audit(&self) -> Option<&QueryAudit> {
        self.audit.as_ref()
    }

    pub fn act<R: Rng + ?Sized>(&self, states: &[f64], n: usize, deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        if deterministic {
            self.actor.deterministic(states, n)
        } else {
            Ok(self.actor.sample(states, n, rng)?.w)
        }
    }

    fn check_policy<P: PolicyMap + ?Sized>(&self, policy: &P) -> Result<()> {
        if policy.state_dim() != self.config.state_dim {
            return Err(dim("policy state", self.config.state_dim, policy.state_dim()));
        }
        if policy.latent_dim() != self.config.latent_dim {
            return Err(dim("policy latent", self.config.latent_dim, policy.latent_dim()));
        }
        let a = policy.action_dim() * policy.chunk_len();
        if a != self.config.action_dim {
            return Err(dim("policy action", self.config.action_dim, a));
        }
        Ok(())
    }

    /// TD target for `Q^A` with `a' = decode(s', w')`, `w'` from the current actor.
    pub fn qa_target<P: PolicyMap + ?Sized, R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        policy: &P,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let n = batch.len;
        let next = self.actor.sample(&batch.next_states, n, rng)?;
        let a_next = policy.decode_batch(&batch.next_states, &next.w, n)?;
        if let Some(audit) = &mut self.audit {
            audit.check_decoded(policy, &batch.next_states, &next.w, &a_next, n)?;
        }
        let q_next = self.qa.target_q(&batch.next_states, &a_next, n)?;
        let alpha = self.temperature.alpha();
        Ok((0..n)
            .map(|r| {
                let soft = q_next[r] - alpha * next.logp[r];
                batch.rewards[r] + batch.discounts[r] * (1.0 - batch.dones[r]) * soft
            })
            .collect())
    }

    pub fn qa_update<P: PolicyMap + ?Sized, R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        policy: &P,
        rng: &mut R,
    ) -> Result<f64> {
        let y = self.qa_target(batch, policy, rng)?;
        if let Some(audit) = &mut self.audit {
            audit.check_dataset(&batch.actions, batch.len);
        }
        finite(self.qa.update(&batch.states, &batch.actions, &y, batch.len)?, "Q^A loss")
    }

    /// Regresses `Q^W(s, w)` onto `Q^A(s, decode(s, w))` for fresh box-clipped
    /// Gaussian `w`. Only `Q^W` changes.
    pub fn qw_distill<P: PolicyMap + ?Sized, R: Rng + ?Sized>(
        &mut self,
        states: &[f64],
        n: usize,
        policy: &P,
        rng: &mut R,
    ) -> Result<f64> {
        self.check_policy(policy)?;
        let mut w: Vec<f64> = (0..n * self.config.latent_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.noise_box.clip_in_place(&mut w);
        let a = policy.decode_batch(states, &w, n)?;
        if let Some(audit) = &mut self.audit {
            audit.check_decoded(policy, states, &w, &a, n)?;
        }
        let y = self.qa.q(states, &a, n)?;
        finite(self.qw.update(states, &w, &y, n)?, "Q^W loss")
    }

    /// One step on `mean(alpha * log pi(w|s) - Q^W(s, w))`; returns the loss
    /// and the sampled log-probabilities.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, states: &[f64], n: usize, rng: &mut R) -> Result<(f64, Vec<f64>, f64)> {
        let alpha = self.temperature.alpha();
        let sample = self.actor.sample(states, n, rng)?;
        let (q, dq) = self.qw.input_gradient(states, &sample.w, n)?;
        let loss = finite(
            (0..n).map(|r| alpha * sample.logp[r] - q[r]).sum::<f64>() / n as f64,
            "actor loss",
        )?;
        let grads = self.actor.gradient(&sample, &dq, alpha)?;
        self.actor.apply_gradient(&grads)?;
        Ok((loss, sample.logp, mean(&q)))
    }

    /// One full gradient step; `distill` selects whether `Q^W` is trained on it.
    pub fn update<P: PolicyMap + ?Sized, R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        policy: &P,
        distill: bool,
        rng: &mut R,
    ) -> Result<UpdateMetrics> {
        let critic_loss = self.qa_update(batch, policy, rng)?;
        let qw_loss = if distill {
            Some(self.qw_distill(&batch.states, batch.len, policy, rng)?)
        } else {
            None
        };
        let (actor_loss, logp, q_mean) = self.actor_update(&batch.states, batch.len, rng)?;
        let alpha_loss = finite(self.temperature.update(&logp)?, "temperature loss")?;
        self.qa.polyak(self.config.tau)?;
        self.updates += 1;
        Ok(UpdateMetrics {
            critic_loss,
            actor_loss,
            alpha_loss,
            alpha: self.temperature.alpha(),
            entropy: -mean(&logp),
            q_mean,
            qw_loss,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.put_u64("agent.kind", 1);
        c.put_u64("agent.updates", self.updates);
        put_config(&mut c, &self.config);
        put_actor(&mut c, "actor", &self.actor);
        put_critics(&mut c, "qa", &self.qa, self.config.state_dim);
        put_critics(&mut c, "qw", &self.qw, self.config.state_dim);
        put_temperature(&mut c, "temperature", &self.temperature);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.u64("agent.kind").ok() != Some(1) {
            return Err(AgentError::Checkpoint("not a DSRL-NA checkpoint".into()));
        }
        let config = get_config(c)?;
        let noise_box = NoiseBox::new(config.half_width, config.latent_dim).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        Ok(Self {
            actor: get_actor(c, "actor")?,
            qa: get_critics(c, "qa")?,
            qw: get_critics(c, "qw")?,
            temperature: get_temperature(c, "temperature")?,
            updates: c.u64("agent.updates").map_err(|e| AgentError::Checkpoint(e.to_string()))?,
            noise_box,
            audit: None,
            config,
        })
    }
}
