use dsrl_agents::SquashedGaussianActor;
use dsrl_latent::{LatentActionMdp, PolicyMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{make_env, EnvConfig, HarnessError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean discounted return from the initial state, in raw env steps.
    pub mean_return: f64,
    /// Mean raw env steps of the successful episodes.
    pub mean_steps_to_success: Option<f64>,
}

/// Runs `n_episodes` episodes. With an actor its deterministic latent is
/// used and clipped to the actor's box; without one, `w ~ N(0, I)` drives the
/// base policy unclipped. The environment and the base-policy noise are
/// seeded from `seed` alone, so repeated calls see the same initial states.
pub fn evaluate_policy(
    actor: Option<&SquashedGaussianActor>,
    policy: &dyn PolicyMap,
    env: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalResult, HarnessError> {
    if n_episodes == 0 {
        return Err(HarnessError::Config("evaluation needs at least one episode".into()));
    }
    let half_width = actor.map_or(f64::MAX, |a| a.half_width());
    let mut mdp = LatentActionMdp::new(make_env(env, seed), policy, half_width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_ba5e);
    let gamma = crate::env_discount(env);
    let (mut successes, mut total_return, mut success_steps) = (0, 0.0, 0usize);
    for _ in 0..n_episodes {
        let mut state = mdp.reset();
        let (mut ret, mut g, mut steps) = (0.0, 1.0, 0usize);
        loop {
            let w = match actor {
                Some(a) => a.deterministic(&state, 1)?,
                None => (0..mdp.latent_dim()).map(|_| rng.sample(StandardNormal)).collect(),
            };
            let out = mdp.chunk_step(&w)?;
            ret += g * out.reward;
            g *= gamma.powi(out.raw_steps as i32);
            steps += out.raw_steps;
            if out.done() {
                if out.success {
                    successes += 1;
                    success_steps += steps;
                }
                break;
            }
            state = out.next_state;
        }
        total_return += ret;
    }
    Ok(EvalResult {
        episodes: n_episodes,
        successes,
        success_rate: successes as f64 / n_episodes as f64,
        mean_return: total_return / n_episodes as f64,
        mean_steps_to_success: (successes > 0).then(|| success_steps as f64 / successes as f64),
    })
}
