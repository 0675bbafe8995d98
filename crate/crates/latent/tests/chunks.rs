use dsrl_latent::{
    discounted_sum, noise_broadcast, Env, EnvError, LatentActionMdp, LatentError, PolicyMap, QueryError, StepOutcome,
};
use proptest::prelude::*;

/// 1-D walk: the state is the running sum of actions, the reward is the
/// action itself, and the episode terminates when the sum leaves `[-limit, limit]`.
struct Walk {
    pos: f64,
    limit: f64,
    gamma: f64,
    live: bool,
    log: Vec<f64>,
}

impl Walk {
    fn new(limit: f64, gamma: f64) -> Self {
        Self {
            pos: 0.0,
            limit,
            gamma,
            live: false,
            log: Vec::new(),
        }
    }
}

impl Env for Walk {
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn action_low(&self) -> Vec<f64> {
        vec![-1.0]
    }
    fn action_high(&self) -> Vec<f64> {
        vec![1.0]
    }
    fn discount(&self) -> f64 {
        self.gamma
    }
    fn reseed(&mut self, _seed: u64) {}
    fn reset(&mut self) -> Vec<f64> {
        self.pos = 0.0;
        self.live = true;
        vec![0.0]
    }
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if !self.live {
            return Err(EnvError::StepAfterDone);
        }
        self.log.push(action[0]);
        self.pos += action[0];
        let terminated = self.pos.abs() > self.limit;
        self.live = !terminated;
        Ok(StepOutcome {
            next_state: vec![self.pos],
            reward: action[0],
            terminated,
            truncated: false,
            success: false,
        })
    }
}

/// Decodes `w` into the chunk `w_i / (1 + |s|)`.
struct Damped {
    chunk_len: usize,
}

impl PolicyMap for Damped {
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn chunk_len(&self) -> usize {
        self.chunk_len
    }
    fn decode(&self, state: &[f64], noise: &[f64]) -> Result<Vec<f64>, QueryError> {
        Ok(noise.iter().map(|w| w / (1.0 + state[0].abs())).collect())
    }
}

fn chunk_len() -> impl Strategy<Value = usize> {
    1usize..6
}

proptest! {
    #[test]
    fn broadcast_repeats_the_single_latent(single in prop::collection::vec(-5.0f64..5.0, 1..5), c in chunk_len()) {
        let full = noise_broadcast(&single, c);
        prop_assert_eq!(full.len(), single.len() * c);
        for block in full.chunks_exact(single.len()) {
            prop_assert_eq!(block, &single[..]);
        }
    }

    #[test]
    fn chunk_step_executes_the_decoded_chunk(
        c in chunk_len(),
        ws in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 5), 1..6),
        gamma in 0.5f64..1.0,
    ) {
        let mut mdp = LatentActionMdp::new(Walk::new(4.0, gamma), Damped { chunk_len: c }, 2.0).unwrap();
        prop_assert!((mdp.discount() - gamma.powi(c as i32)).abs() < 1e-15);
        mdp.reset();
        let mut executed = 0;
        for w in &ws {
            let s = mdp.state().unwrap()[0];
            let step = mdp.chunk_step(&w[..c]).unwrap();
            prop_assert!(mdp.noise_box().contains(&step.latent));
            let expected: Vec<f64> = w[..c].iter().map(|v| v.clamp(-2.0, 2.0) / (1.0 + s.abs())).collect();
            prop_assert_eq!(&step.action, &expected);
            let ran = &mdp.env().log[executed..];
            prop_assert_eq!(ran.len(), step.raw_steps);
            prop_assert_eq!(ran, &expected[..step.raw_steps]);
            prop_assert!((step.reward - discounted_sum(ran, gamma)).abs() < 1e-12);
            executed += step.raw_steps;
            if step.done() {
                prop_assert!(step.terminated);
                prop_assert!(mdp.state().is_none());
                break;
            }
            prop_assert_eq!(step.raw_steps, c);
            prop_assert_eq!(mdp.state().unwrap(), &step.next_state[..]);
        }
    }
}

#[test]
fn termination_mid_chunk_truncates_execution() {
    let mut mdp = LatentActionMdp::new(Walk::new(1.5, 0.9), Damped { chunk_len: 4 }, 1.0).unwrap();
    mdp.reset();
    // the whole chunk is decoded at s = 0, so every action is 1 and the walk
    // leaves [-1.5, 1.5] on the second step
    let step = mdp.chunk_step(&[1.0, 1.0, 1.0, 1.0]).unwrap();
    assert_eq!(step.raw_steps, 2);
    assert_eq!(step.action.len(), 4);
    assert!(step.terminated);
    assert!((step.reward - (1.0 + 0.9)).abs() < 1e-15);
    assert!(matches!(mdp.chunk_step(&[0.0; 4]), Err(LatentError::Env(EnvError::NotReset))));
}

#[test]
fn mismatched_policy_is_rejected() {
    struct Wide;
    impl PolicyMap for Wide {
        fn state_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            2
        }
        fn chunk_len(&self) -> usize {
            1
        }
        fn decode(&self, _: &[f64], noise: &[f64]) -> Result<Vec<f64>, QueryError> {
            Ok(noise.to_vec())
        }
    }
    assert!(matches!(
        LatentActionMdp::new(Walk::new(1.0, 0.9), Wide, 1.0),
        Err(LatentError::Mismatch { what: "action dimension", .. })
    ));
}
