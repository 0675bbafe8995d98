use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called after the episode ended")]
    StepAfterDone,
    #[error("step called before reset")]
    NotReset,
    #[error("action has dimension {got}, expected {expected}")]
    ActionDim { expected: usize, got: usize },
    #[error("non-finite action component")]
    NonFiniteAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// True terminal state; no bootstrapping past it.
    pub terminated: bool,
    /// Horizon cut-off.
    pub truncated: bool,
    /// Task-specific success flag, used for evaluation only.
    pub success: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Episodic environment with a continuous box action space.
///
/// Implementations own their random stream; the same seed and the same
/// action sequence reproduce the same trajectory.
pub trait Env: Send {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_low(&self) -> Vec<f64>;
    fn action_high(&self) -> Vec<f64>;
    fn discount(&self) -> f64;
    /// Restarts the random stream used for initial states.
    fn reseed(&mut self, seed: u64);
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError>;
}

impl<E: Env + ?Sized> Env for Box<E> {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn action_low(&self) -> Vec<f64> {
        (**self).action_low()
    }
    fn action_high(&self) -> Vec<f64> {
        (**self).action_high()
    }
    fn discount(&self) -> f64 {
        (**self).discount()
    }
    fn reseed(&mut self, seed: u64) {
        (**self).reseed(seed)
    }
    fn reset(&mut self) -> Vec<f64> {
        (**self).reset()
    }
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        (**self).step(action)
    }
}
