use dsrl_latent::{Env, EnvError, PolicyMap, QueryError, StepOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Finite MDP with an enumerable transition table and a 1-D continuous
/// action that selects the nearest entry of `effects`.
///
/// States are exposed as one-hot vectors. Entering a terminal state ends the
/// episode; terminal states carry no value.
#[derive(Debug, Clone)]
pub struct ChainMdp {
    effects: Vec<f64>,
    /// `table[s][a]` lists `(next_state, probability)`.
    table: Vec<Vec<Vec<(usize, f64)>>>,
    rewards: Vec<Vec<f64>>,
    terminal: Vec<bool>,
    start: usize,
    gamma: f64,
    horizon: usize,
    rng: ChaCha8Rng,
    state: usize,
    t: usize,
    live: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainValues {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub iterations: usize,
}

impl ChainValues {
    /// Indices of all actions within `tol` of the best one in state `s`.
    pub fn optimal_actions(&self, s: usize, tol: f64) -> Vec<usize> {
        let best = self.v[s];
        (0..self.q[s].len())
            .filter(|&a| self.q[s][a] >= best - tol)
            .collect()
    }
}

impl ChainMdp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        effects: Vec<f64>,
        table: Vec<Vec<Vec<(usize, f64)>>>,
        rewards: Vec<Vec<f64>>,
        terminal: Vec<bool>,
        start: usize,
        gamma: f64,
        horizon: usize,
    ) -> Result<Self, String> {
        let n = table.len();
        let k = effects.len();
        if n == 0 || k == 0 {
            return Err("chain needs at least one state and one action".into());
        }
        if rewards.len() != n || terminal.len() != n || start >= n {
            return Err("reward, terminal or start table does not match the state count".into());
        }
        if !(0.0..1.0).contains(&gamma) || horizon == 0 {
            return Err(format!("invalid gamma {gamma} or horizon {horizon}"));
        }
        for (s, row) in table.iter().enumerate() {
            if row.len() != k || rewards[s].len() != k {
                return Err(format!("state {s} does not list {k} actions"));
            }
            for (a, outcomes) in row.iter().enumerate() {
                let mut total = 0.0;
                for &(next, p) in outcomes {
                    if next >= n || !(0.0..=1.0).contains(&p) {
                        return Err(format!("bad outcome ({next}, {p}) at ({s}, {a})"));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(format!("row ({s}, {a}) sums to {total}"));
                }
            }
        }
        Ok(Self {
            effects,
            table,
            rewards,
            terminal,
            start,
            gamma,
            horizon,
            rng: ChaCha8Rng::seed_from_u64(0),
            state: start,
            t: 0,
            live: false,
        })
    }

    /// Deterministic line of `n` states with moves {-1, 0, +1}. Entering the
    /// last state pays 1 and terminates; staying in state 0 pays `stay_reward`.
    pub fn ladder(n: usize, stay_reward: f64, gamma: f64) -> Self {
        assert!(n >= 2, "ladder needs at least two states");
        let goal = n - 1;
        let mut table = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for s in 0..n {
            if s == goal {
                table.push(vec![vec![(s, 1.0)]; 3]);
                rewards.push(vec![0.0; 3]);
                continue;
            }
            let left = s.saturating_sub(1);
            let right = s + 1;
            table.push(vec![vec![(left, 1.0)], vec![(s, 1.0)], vec![(right, 1.0)]]);
            let stay = if s == 0 { stay_reward } else { 0.0 };
            let enter = if right == goal { 1.0 } else { 0.0 };
            let left_r = if s == 0 { stay_reward } else { 0.0 };
            rewards.push(vec![left_r, stay, enter]);
        }
        let mut terminal = vec![false; n];
        terminal[goal] = true;
        Self::new(vec![-1.0, 0.0, 1.0], table, rewards, terminal, 0, gamma, 50)
            .expect("ladder construction is valid")
    }

    /// Two non-terminal states, three actions: action 2 in state 0 pays 1,
    /// action 0 moves between the states, action 1 stays put.
    pub fn two_state(gamma: f64) -> Self {
        let table = vec![
            vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)]],
            vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)]],
        ];
        let rewards = vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0]];
        Self::new(
            vec![-1.0, 0.0, 1.0],
            table,
            rewards,
            vec![false, false],
            1,
            gamma,
            50,
        )
        .expect("two-state construction is valid")
    }

    pub fn num_states(&self) -> usize {
        self.table.len()
    }

    pub fn num_actions(&self) -> usize {
        self.effects.len()
    }

    pub fn effects(&self) -> &[f64] {
        &self.effects
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s][a]
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.table[s][a]
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.num_states()];
        v[s] = 1.0;
        v
    }

    /// Inverse of [`one_hot`](Self::one_hot): index of the largest entry.
    pub fn state_index(&self, state: &[f64]) -> usize {
        let mut best = 0;
        for (i, &x) in state.iter().enumerate() {
            if x > state[best] {
                best = i;
            }
        }
        best
    }

    /// Index of the effect closest to `action`; ties go to the lower index.
    pub fn effect_index(&self, action: f64) -> usize {
        let mut best = 0;
        for (i, &e) in self.effects.iter().enumerate() {
            if (e - action).abs() < (self.effects[best] - action).abs() {
                best = i;
            }
        }
        best
    }

    /// Value iteration to a max-norm change below `tol`.
    pub fn value_iteration(&self, tol: f64, max_iters: usize) -> ChainValues {
        let n = self.num_states();
        let k = self.num_actions();
        let mut v = vec![0.0; n];
        let mut q = vec![vec![0.0; k]; n];
        let mut iterations = 0;
        while iterations < max_iters {
            iterations += 1;
            let mut delta: f64 = 0.0;
            for s in 0..n {
                if self.terminal[s] {
                    continue;
                }
                for a in 0..k {
                    let cont: f64 = self.table[s][a]
                        .iter()
                        .map(|&(next, p)| if self.terminal[next] { 0.0 } else { p * v[next] })
                        .sum();
                    q[s][a] = self.rewards[s][a] + self.gamma * cont;
                }
            }
            for s in 0..n {
                let best = if self.terminal[s] {
                    0.0
                } else {
                    q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                delta = delta.max((best - v[s]).abs());
                v[s] = best;
            }
            if delta < tol {
                break;
            }
        }
        ChainValues { q, v, iterations }
    }

    /// Places the chain in state `s` with a fresh episode clock.
    pub fn reset_to(&mut self, s: usize) -> Vec<f64> {
        self.state = s;
        self.t = 0;
        self.live = !self.terminal[s];
        self.one_hot(s)
    }
}

impl Env for ChainMdp {
    fn state_dim(&self) -> usize {
        self.num_states()
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_low(&self) -> Vec<f64> {
        vec![self.effects.iter().copied().fold(f64::INFINITY, f64::min)]
    }

    fn action_high(&self) -> Vec<f64> {
        vec![self.effects.iter().copied().fold(f64::NEG_INFINITY, f64::max)]
    }

    fn discount(&self) -> f64 {
        self.gamma
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn reset(&mut self) -> Vec<f64> {
        self.reset_to(self.start)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if !self.live {
            return Err(if self.t == 0 {
                EnvError::NotReset
            } else {
                EnvError::StepAfterDone
            });
        }
        if action.len() != 1 {
            return Err(EnvError::ActionDim {
                expected: 1,
                got: action.len(),
            });
        }
        if !action[0].is_finite() {
            return Err(EnvError::NonFiniteAction);
        }
        let a = self.effect_index(action[0]);
        let outcomes = &self.table[self.state][a];
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut next = outcomes[outcomes.len() - 1].0;
        for &(s, p) in outcomes {
            acc += p;
            if u < acc {
                next = s;
                break;
            }
        }
        let reward = self.rewards[self.state][a];
        self.state = next;
        self.t += 1;
        let terminated = self.terminal[next];
        let truncated = !terminated && self.t >= self.horizon;
        if terminated || truncated {
            self.live = false;
        }
        Ok(StepOutcome {
            next_state: self.one_hot(next),
            reward,
            terminated,
            truncated,
            success: terminated && reward > 0.0,
        })
    }
}

/// Decoder for chain tasks: splits the noise interval `[-b, b]` into equal
/// bins, one per action effect. Noise outside the interval falls into the
/// nearest end bin.
#[derive(Debug, Clone)]
pub struct ThresholdDecoder {
    state_dim: usize,
    half_width: f64,
    effects: Vec<f64>,
}

impl ThresholdDecoder {
    pub fn new(state_dim: usize, half_width: f64, effects: Vec<f64>) -> Self {
        assert!(half_width > 0.0 && !effects.is_empty());
        Self {
            state_dim,
            half_width,
            effects,
        }
    }

    pub fn for_chain(chain: &ChainMdp, half_width: f64) -> Self {
        Self::new(chain.num_states(), half_width, chain.effects.clone())
    }

    pub fn bin(&self, w: f64) -> usize {
        let k = self.effects.len();
        let width = 2.0 * self.half_width / k as f64;
        let idx = ((w + self.half_width) / width).floor();
        (idx.max(0.0) as usize).min(k - 1)
    }
}

impl PolicyMap for ThresholdDecoder {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn chunk_len(&self) -> usize {
        1
    }

    fn decode(&self, state: &[f64], noise: &[f64]) -> Result<Vec<f64>, QueryError> {
        if state.len() != self.state_dim {
            return Err(QueryError::Dimension {
                what: "state",
                expected: self.state_dim,
                got: state.len(),
            });
        }
        if noise.len() != 1 {
            return Err(QueryError::Dimension {
                what: "noise",
                expected: 1,
                got: noise.len(),
            });
        }
        Ok(vec![self.effects[self.bin(noise[0])]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ladder_values_match_closed_form() {
        let chain = ChainMdp::ladder(5, 0.1, 0.9);
        let vals = chain.value_iteration(1e-12, 10_000);
        // staying in state 0 forever is worth 0.1 / (1 - 0.9) = 1.0
        assert!((vals.q[0][1] - 1.0).abs() < 1e-9);
        assert!((vals.q[3][2] - 1.0).abs() < 1e-12);
        assert!((vals.q[2][2] - 0.9).abs() < 1e-12);
        assert!((vals.q[1][0] - 0.9).abs() < 1e-9);
        assert!((vals.q[1][2] - 0.81).abs() < 1e-12);
        assert_eq!(vals.optimal_actions(0, 1e-9), vec![0, 1]);
        assert_eq!(vals.optimal_actions(1, 1e-9), vec![0]);
        assert_eq!(vals.optimal_actions(2, 1e-9), vec![2]);
        assert_eq!(vals.v[4], 0.0);
    }

    #[test]
    fn two_state_values() {
        let chain = ChainMdp::two_state(0.9);
        let vals = chain.value_iteration(1e-13, 100_000);
        // V(0) = 1 / (1 - 0.9), V(1) = 0.9 V(0)
        assert!((vals.v[0] - 10.0).abs() < 1e-9);
        assert!((vals.v[1] - 9.0).abs() < 1e-9);
        assert!((vals.q[1][1] - 8.1).abs() < 1e-9);
    }

    #[test]
    fn rows_must_sum_to_one() {
        let err = ChainMdp::new(
            vec![0.0],
            vec![vec![vec![(0, 0.5)]]],
            vec![vec![0.0]],
            vec![false],
            0,
            0.9,
            10,
        );
        assert!(err.is_err());
    }

    #[test]
    fn env_walks_the_ladder() {
        let mut chain = ChainMdp::ladder(4, 0.0, 0.9);
        assert_eq!(chain.reset(), vec![1.0, 0.0, 0.0, 0.0]);
        chain.step(&[0.9]).unwrap();
        chain.step(&[1.0]).unwrap();
        let out = chain.step(&[0.7]).unwrap();
        assert!(out.terminated && out.success);
        assert_eq!(out.reward, 1.0);
        assert_eq!(chain.step(&[0.0]), Err(EnvError::StepAfterDone));
    }

    #[test]
    fn decoder_bins() {
        let d = ThresholdDecoder::new(2, 1.5, vec![-1.0, 0.0, 1.0]);
        let s = [1.0, 0.0];
        assert_eq!(d.decode(&s, &[-0.6]).unwrap(), vec![-1.0]);
        assert_eq!(d.decode(&s, &[-0.4]).unwrap(), vec![0.0]);
        assert_eq!(d.decode(&s, &[0.4]).unwrap(), vec![0.0]);
        assert_eq!(d.decode(&s, &[0.6]).unwrap(), vec![1.0]);
        assert_eq!(d.decode(&s, &[9.0]).unwrap(), vec![1.0]);
        assert!(d.decode(&s, &[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn stochastic_rows_are_sampled_in_proportion(p in 0.1f64..0.9) {
            let table = vec![
                vec![vec![(1, p), (2, 1.0 - p)]],
                vec![vec![(1, 1.0)]],
                vec![vec![(2, 1.0)]],
            ];
            let mut chain = ChainMdp::new(
                vec![0.0],
                table,
                vec![vec![0.0]; 3],
                vec![false, true, true],
                0,
                0.9,
                10,
            )
            .unwrap();
            chain.reseed(7);
            let n = 4000;
            let mut hits = 0;
            for _ in 0..n {
                chain.reset();
                let out = chain.step(&[0.0]).unwrap();
                if out.next_state[1] == 1.0 {
                    hits += 1;
                }
            }
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            prop_assert!((hits as f64 / n as f64 - p).abs() < 5.0 * sd);
        }
    }
}
