use thiserror::Error;

use crate::{Env, EnvError, NoiseBox, NoiseBoxError, PolicyMap, QueryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatentError {
    #[error("policy query failed: {0}")]
    Query(#[from] QueryError),
    #[error("environment error: {0}")]
    Env(#[from] EnvError),
    #[error(transparent)]
    NoiseBox(#[from] NoiseBoxError),
    #[error("policy and environment disagree on {what}: policy {policy}, env {env}")]
    Mismatch {
        what: &'static str,
        policy: usize,
        env: usize,
    },
    #[error("latent step requires chunk length 1, policy uses {0}")]
    ChunkedPolicy(usize),
    #[error("decoded action has dimension {got}, expected {expected}")]
    DecodedDim { expected: usize, got: usize },
}

/// Result of one latent action: a whole decoded chunk executed open-loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkStep {
    pub next_state: Vec<f64>,
    /// `sum_i gamma^i r_i` over the executed sub-steps.
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub success: bool,
    /// The decoded chunk (all `C` actions, even if the episode ended early).
    pub action: Vec<f64>,
    /// The clipped latent that produced `action`.
    pub latent: Vec<f64>,
    /// Number of raw environment steps executed.
    pub raw_steps: usize,
}

impl ChunkStep {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// `sum_i gamma^i r_i`.
pub fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    let mut acc = 0.0;
    let mut g = 1.0;
    for r in rewards {
        acc += g * r;
        g *= gamma;
    }
    acc
}

/// An environment seen through a generative policy: actions are latent noise
/// vectors in a box, each decoded to an action chunk.
pub struct LatentActionMdp<E, P> {
    env: E,
    policy: P,
    noise_box: NoiseBox,
    state: Option<Vec<f64>>,
}

impl<E: Env, P: PolicyMap> LatentActionMdp<E, P> {
    pub fn new(env: E, policy: P, half_width: f64) -> Result<Self, LatentError> {
        if policy.state_dim() != env.state_dim() {
            return Err(LatentError::Mismatch {
                what: "state dimension",
                policy: policy.state_dim(),
                env: env.state_dim(),
            });
        }
        if policy.action_dim() != env.action_dim() {
            return Err(LatentError::Mismatch {
                what: "action dimension",
                policy: policy.action_dim(),
                env: env.action_dim(),
            });
        }
        let noise_box = NoiseBox::new(half_width, policy.latent_dim())?;
        Ok(Self {
            env,
            policy,
            noise_box,
            state: None,
        })
    }

    pub fn noise_box(&self) -> &NoiseBox {
        &self.noise_box
    }

    pub fn chunk_len(&self) -> usize {
        self.policy.chunk_len()
    }

    pub fn latent_dim(&self) -> usize {
        self.policy.latent_dim()
    }

    /// Discount between consecutive latent decisions, `gamma^C`.
    pub fn discount(&self) -> f64 {
        self.env.discount().powi(self.chunk_len() as i32)
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut E {
        &mut self.env
    }

    pub fn policy(&self) -> &P {
        &self.policy
    }

    pub fn state(&self) -> Option<&[f64]> {
        self.state.as_deref()
    }

    pub fn reset(&mut self) -> Vec<f64> {
        let s = self.env.reset();
        self.state = Some(s.clone());
        s
    }

    /// One step with an unchunked policy; identical to [`Self::chunk_step`]
    /// when `C = 1`.
    pub fn latent_step(&mut self, w: &[f64]) -> Result<ChunkStep, LatentError> {
        if self.chunk_len() != 1 {
            return Err(LatentError::ChunkedPolicy(self.chunk_len()));
        }
        self.chunk_step(w)
    }

    /// Decodes `clip(w)` at the current state into a chunk and executes it,
    /// discarding the intermediate observations. Stops early if a sub-step
    /// ends the episode.
    pub fn chunk_step(&mut self, w: &[f64]) -> Result<ChunkStep, LatentError> {
        let state = self.state.clone().ok_or(EnvError::NotReset)?;
        if w.len() != self.noise_box.dim() {
            return Err(QueryError::Dimension {
                what: "latent action",
                expected: self.noise_box.dim(),
                got: w.len(),
            }
            .into());
        }
        let latent = self.noise_box.clip(w);
        let action = match self.policy.decode(&state, &latent) {
            Ok(a) => a,
            Err(e) => {
                // a failed query aborts the episode
                self.state = None;
                return Err(e.into());
            }
        };
        let d = self.env.action_dim();
        if action.len() != d * self.chunk_len() {
            self.state = None;
            return Err(LatentError::DecodedDim {
                expected: d * self.chunk_len(),
                got: action.len(),
            });
        }
        let gamma = self.env.discount();
        let mut reward = 0.0;
        let mut g = 1.0;
        let mut raw_steps = 0;
        let mut last = None;
        for a in action.chunks_exact(d) {
            let out = self.env.step(a)?;
            raw_steps += 1;
            reward += g * out.reward;
            g *= gamma;
            let done = out.done();
            last = Some(out);
            if done {
                break;
            }
        }
        let last = last.expect("chunk has at least one action");
        self.state = if last.done() {
            None
        } else {
            Some(last.next_state.clone())
        };
        Ok(ChunkStep {
            next_state: last.next_state,
            reward,
            terminated: last.terminated,
            truncated: last.truncated,
            success: last.success,
            action,
            latent,
            raw_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::StepOutcome;

    /// Counter env: reward script indexed by step, ends after `len` steps.
    struct Scripted {
        rewards: Vec<f64>,
        t: usize,
        gamma: f64,
    }

    impl Env for Scripted {
        fn state_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn action_low(&self) -> Vec<f64> {
            vec![-10.0]
        }
        fn action_high(&self) -> Vec<f64> {
            vec![10.0]
        }
        fn discount(&self) -> f64 {
            self.gamma
        }
        fn reseed(&mut self, _seed: u64) {}
        fn reset(&mut self) -> Vec<f64> {
            self.t = 0;
            vec![0.0]
        }
        fn step(&mut self, _a: &[f64]) -> Result<StepOutcome, EnvError> {
            let r = self.rewards[self.t];
            self.t += 1;
            Ok(StepOutcome {
                next_state: vec![self.t as f64],
                reward: r,
                terminated: self.t == self.rewards.len(),
                truncated: false,
                success: false,
            })
        }
    }

    struct Echo(usize);

    impl PolicyMap for Echo {
        fn state_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn chunk_len(&self) -> usize {
            self.0
        }
        fn decode(&self, _s: &[f64], w: &[f64]) -> Result<Vec<f64>, QueryError> {
            Ok(w.to_vec())
        }
    }

    #[test]
    fn chunk_reward_is_discounted_sum() {
        let env = Scripted {
            rewards: vec![0.0, 0.0, 1.0, 0.0, 0.0],
            t: 0,
            gamma: 0.99,
        };
        let mut m = LatentActionMdp::new(env, Echo(4), 1.0).unwrap();
        m.reset();
        let step = m.chunk_step(&[0.0; 4]).unwrap();
        assert!((step.reward - 0.9801).abs() < 1e-15);
        assert_eq!(step.raw_steps, 4);
        assert!(!step.done());
    }

    #[test]
    fn zero_rewards_give_zero() {
        let env = Scripted {
            rewards: vec![0.0; 8],
            t: 0,
            gamma: 0.9,
        };
        let mut m = LatentActionMdp::new(env, Echo(4), 1.0).unwrap();
        m.reset();
        assert_eq!(m.chunk_step(&[0.5; 4]).unwrap().reward, 0.0);
    }

    #[test]
    fn chunk_stops_at_termination() {
        let env = Scripted {
            rewards: vec![0.0, 2.0],
            t: 0,
            gamma: 0.5,
        };
        let mut m = LatentActionMdp::new(env, Echo(4), 1.0).unwrap();
        m.reset();
        let step = m.chunk_step(&[0.1; 4]).unwrap();
        assert_eq!(step.raw_steps, 2);
        assert!(step.terminated);
        assert_eq!(step.reward, 1.0);
        assert_eq!(m.chunk_step(&[0.1; 4]), Err(LatentError::Env(EnvError::NotReset)));
    }

    #[test]
    fn latent_step_requires_single_action_chunks() {
        let env = Scripted {
            rewards: vec![0.0; 3],
            t: 0,
            gamma: 0.9,
        };
        let mut m = LatentActionMdp::new(env, Echo(2), 1.0).unwrap();
        m.reset();
        assert_eq!(m.latent_step(&[0.0; 2]), Err(LatentError::ChunkedPolicy(2)));
    }

    #[test]
    fn latent_is_clipped_before_decoding() {
        let env = Scripted {
            rewards: vec![0.0; 3],
            t: 0,
            gamma: 0.9,
        };
        let mut m = LatentActionMdp::new(env, Echo(1), 1.5).unwrap();
        m.reset();
        let step = m.latent_step(&[-3.0]).unwrap();
        assert_eq!(step.action, vec![-1.5]);
        assert_eq!(step.latent, vec![-1.5]);
    }

    #[test]
    fn discounted_sum_matches_manual() {
        assert_eq!(discounted_sum(&[1.0, 1.0, 1.0], 0.5), 1.75);
    }
}
