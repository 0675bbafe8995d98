use crate::{Dataset, EnvId, PointMassConfig, PointMassEnv, Transition};
use dsrl_latent::{Env, EnvError, PolicyMap, QueryError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("n_episodes must be positive")]
    NoEpisodes,
    #[error("mode mix {0} is outside [0, 1]")]
    InvalidMix(f64),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Proportional controller toward a fixed goal with optional Gaussian
/// action noise. Actions are clipped to the speed limit.
#[derive(Debug, Clone)]
pub struct ScriptedController {
    pub goal: [f64; 2],
    pub gain: f64,
    pub max_speed: f64,
    pub noise_std: f64,
}

impl ScriptedController {
    pub fn new(goal: [f64; 2], max_speed: f64, noise_std: f64) -> Self {
        Self {
            goal,
            gain: 1.0,
            max_speed,
            noise_std,
        }
    }

    pub fn clean_action(&self, pos: &[f64]) -> [f64; 2] {
        let v = self.max_speed;
        [
            (self.gain * (self.goal[0] - pos[0])).clamp(-v, v),
            (self.gain * (self.goal[1] - pos[1])).clamp(-v, v),
        ]
    }

    pub fn act<R: Rng + ?Sized>(&self, pos: &[f64], rng: &mut R) -> [f64; 2] {
        let mut a = self.clean_action(pos);
        if self.noise_std > 0.0 {
            let normal = Normal::new(0.0, self.noise_std).expect("noise std is finite");
            for x in &mut a {
                *x = (*x + normal.sample(rng)).clamp(-self.max_speed, self.max_speed);
            }
        }
        a
    }
}

/// Rolls out scripted demonstrations on the point-mass task. Exactly
/// `round(p * n_episodes)` episodes, in shuffled order, are driven to the
/// rewarded right goal; the rest go to the left goal.
pub fn generate_demos(
    cfg: &PointMassConfig,
    p: f64,
    n_episodes: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset, DemoError> {
    if n_episodes == 0 {
        return Err(DemoError::NoEpisodes);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(DemoError::InvalidMix(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_right = (p * n_episodes as f64).round() as usize;
    let mut to_right: Vec<bool> = (0..n_episodes).map(|i| i < n_right).collect();
    to_right.shuffle(&mut rng);

    let mut env = PointMassEnv::new(cfg.clone(), rng.random());
    let mut ds = Dataset::new(EnvId::PointMass, 2, 2, cfg.gamma);
    for right in to_right {
        let goal = if right { cfg.right_goal } else { cfg.left_goal };
        let ctrl = ScriptedController::new(goal, cfg.max_speed, noise_std);
        let mut state = env.reset();
        loop {
            let action = ctrl.act(&state, &mut rng);
            let out = env.step(&action)?;
            ds.transitions.push(Transition {
                state: state.clone(),
                action: action.to_vec(),
                reward: out.reward,
                next_state: out.next_state.clone(),
                done: out.terminated,
            });
            if out.done() {
                break;
            }
            state = out.next_state;
        }
    }
    Ok(ds)
}

/// Noise-ignoring policy map that plays the clean scripted controller on the
/// point-mass task. Chunks are planned open loop through the known dynamics.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    controller: ScriptedController,
    chunk_len: usize,
}

impl ScriptedPolicy {
    pub fn new(goal: [f64; 2], max_speed: f64, chunk_len: usize) -> Self {
        assert!(chunk_len >= 1);
        Self {
            controller: ScriptedController::new(goal, max_speed, 0.0),
            chunk_len,
        }
    }
}

impl PolicyMap for ScriptedPolicy {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    fn decode(&self, state: &[f64], noise: &[f64]) -> Result<Vec<f64>, QueryError> {
        if state.len() != 2 {
            return Err(QueryError::Dimension {
                what: "state",
                expected: 2,
                got: state.len(),
            });
        }
        if noise.len() != self.latent_dim() {
            return Err(QueryError::Dimension {
                what: "noise",
                expected: self.latent_dim(),
                got: noise.len(),
            });
        }
        let mut pos = [state[0], state[1]];
        let mut out = Vec::with_capacity(2 * self.chunk_len);
        for _ in 0..self.chunk_len {
            let a = self.controller.clean_action(&pos);
            pos = [(pos[0] + a[0]).clamp(-1.0, 1.0), (pos[1] + a[1]).clamp(-1.0, 1.0)];
            out.extend_from_slice(&a);
        }
        Ok(out)
    }
}
