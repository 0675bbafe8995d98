use dsrl_latent::{Env, EnvError, StepOutcome};

/// One-step task with reward `-‖a - a*‖²` over the box `[low, high]^d`.
/// The single state is a constant vector of ones.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    target: Vec<f64>,
    low: f64,
    high: f64,
    success_radius: f64,
    live: bool,
    stepped: bool,
}

impl BanditEnv {
    pub fn new(target: Vec<f64>, low: f64, high: f64, success_radius: f64) -> Self {
        assert!(low < high && !target.is_empty());
        Self {
            target,
            low,
            high,
            success_radius,
            live: false,
            stepped: false,
        }
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn distance(&self, action: &[f64]) -> f64 {
        action
            .iter()
            .zip(&self.target)
            .map(|(a, t)| (a - t).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl Env for BanditEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        self.target.len()
    }

    fn action_low(&self) -> Vec<f64> {
        vec![self.low; self.target.len()]
    }

    fn action_high(&self) -> Vec<f64> {
        vec![self.high; self.target.len()]
    }

    fn discount(&self) -> f64 {
        0.99
    }

    fn reseed(&mut self, _seed: u64) {}

    fn reset(&mut self) -> Vec<f64> {
        self.live = true;
        self.stepped = false;
        vec![1.0]
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if !self.live {
            return Err(if self.stepped {
                EnvError::StepAfterDone
            } else {
                EnvError::NotReset
            });
        }
        if action.len() != self.target.len() {
            return Err(EnvError::ActionDim {
                expected: self.target.len(),
                got: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        self.live = false;
        self.stepped = true;
        let clamped: Vec<f64> = action.iter().map(|a| a.clamp(self.low, self.high)).collect();
        let d = self.distance(&clamped);
        Ok(StepOutcome {
            next_state: vec![1.0],
            reward: -d * d,
            terminated: true,
            truncated: false,
            success: d < self.success_radius,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_is_negative_squared_distance() {
        let mut env = BanditEnv::new(vec![0.5, -0.5], -1.0, 1.0, 0.1);
        env.reset();
        let out = env.step(&[0.0, 0.0]).unwrap();
        assert!((out.reward + 0.5).abs() < 1e-15);
        assert!(out.terminated && !out.success);
        env.reset();
        assert!(env.step(&[0.5, -0.45]).unwrap().success);
        assert_eq!(env.step(&[0.0, 0.0]), Err(EnvError::StepAfterDone));
    }
}
