use dsrl_latent::{Env, EnvError, StepOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassConfig {
    pub max_speed: f64,
    pub left_goal: [f64; 2],
    pub right_goal: [f64; 2],
    pub goal_radius: f64,
    pub start_jitter: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            max_speed: 0.2,
            left_goal: [-0.8, 0.0],
            right_goal: [0.8, 0.0],
            goal_radius: 0.1,
            start_jitter: 0.05,
            horizon: 60,
            gamma: 0.99,
        }
    }
}

/// 2-D point mass in the unit box with two goal discs. Only the right goal
/// pays: reward 1 on entering it, 0 otherwise. Entering either goal ends the
/// episode.
#[derive(Debug, Clone)]
pub struct PointMassEnv {
    cfg: PointMassConfig,
    rng: ChaCha8Rng,
    pos: [f64; 2],
    t: usize,
    live: bool,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl PointMassEnv {
    pub fn new(cfg: PointMassConfig, seed: u64) -> Self {
        Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pos: [0.0; 2],
            t: 0,
            live: false,
        }
    }

    pub fn config(&self) -> &PointMassConfig {
        &self.cfg
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    /// Starts an episode from an explicit position.
    pub fn reset_to(&mut self, pos: [f64; 2]) -> Vec<f64> {
        self.pos = [pos[0].clamp(-1.0, 1.0), pos[1].clamp(-1.0, 1.0)];
        self.t = 0;
        self.live = true;
        self.pos.to_vec()
    }

    pub fn in_right_goal(&self, pos: [f64; 2]) -> bool {
        dist(pos, self.cfg.right_goal) <= self.cfg.goal_radius
    }

    pub fn in_left_goal(&self, pos: [f64; 2]) -> bool {
        dist(pos, self.cfg.left_goal) <= self.cfg.goal_radius
    }
}

impl Env for PointMassEnv {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn action_low(&self) -> Vec<f64> {
        vec![-self.cfg.max_speed; 2]
    }

    fn action_high(&self) -> Vec<f64> {
        vec![self.cfg.max_speed; 2]
    }

    fn discount(&self) -> f64 {
        self.cfg.gamma
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn reset(&mut self) -> Vec<f64> {
        let j = self.cfg.start_jitter;
        let start = if j > 0.0 {
            [self.rng.random_range(-j..=j), self.rng.random_range(-j..=j)]
        } else {
            [0.0, 0.0]
        };
        self.reset_to(start)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if !self.live {
            return Err(if self.t == 0 {
                EnvError::NotReset
            } else {
                EnvError::StepAfterDone
            });
        }
        if action.len() != 2 {
            return Err(EnvError::ActionDim {
                expected: 2,
                got: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        let v = self.cfg.max_speed;
        for i in 0..2 {
            self.pos[i] = (self.pos[i] + action[i].clamp(-v, v)).clamp(-1.0, 1.0);
        }
        self.t += 1;
        let success = self.in_right_goal(self.pos);
        let terminated = success || self.in_left_goal(self.pos);
        let truncated = !terminated && self.t >= self.cfg.horizon;
        if terminated || truncated {
            self.live = false;
        }
        Ok(StepOutcome {
            next_state: self.pos.to_vec(),
            reward: if success { 1.0 } else { 0.0 },
            terminated,
            truncated,
            success,
        })
    }
}
