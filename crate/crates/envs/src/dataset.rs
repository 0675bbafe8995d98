use std::fs;
use std::path::Path;
use thiserror::Error;

pub const DATASET_MAGIC: &[u8; 8] = b"DSRLDATA";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("dataset version {found}, this build reads version {DATASET_VERSION}")]
    Version { found: u32 },
    #[error("truncated dataset: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dimension mismatch: expected ({state}, {action}), got ({got_state}, {got_action})")]
    DimMismatch {
        state: usize,
        action: usize,
        got_state: usize,
        got_action: usize,
    },
    #[error("unknown environment id {0}")]
    UnknownEnv(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvId {
    PointMass,
    Chain,
    Bandit,
}

impl EnvId {
    pub fn code(self) -> u32 {
        match self {
            EnvId::PointMass => 1,
            EnvId::Chain => 2,
            EnvId::Bandit => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(EnvId::PointMass),
            2 => Some(EnvId::Chain),
            3 => Some(EnvId::Bandit),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvId::PointMass => "point-mass",
            EnvId::Chain => "chain",
            EnvId::Bandit => "bandit",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [EnvId::PointMass, EnvId::Chain, EnvId::Bandit]
            .into_iter()
            .find(|id| id.name() == name)
    }
}

/// `done` marks a true terminal; a horizon cut-off is stored with
/// `done = false` so the next state can still be bootstrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub env: EnvId,
    pub state_dim: usize,
    pub action_dim: usize,
    pub gamma: f64,
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn new(env: EnvId, state_dim: usize, action_dim: usize, gamma: f64) -> Self {
        Self {
            env,
            state_dim,
            action_dim,
            gamma,
            transitions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<(), DatasetError> {
        if t.state.len() != self.state_dim
            || t.next_state.len() != self.state_dim
            || t.action.len() != self.action_dim
        {
            return Err(DatasetError::DimMismatch {
                state: self.state_dim,
                action: self.action_dim,
                got_state: t.state.len(),
                got_action: t.action.len(),
            });
        }
        self.transitions.push(t);
        Ok(())
    }

    /// Splits the records into episodes. A boundary follows a terminal record
    /// or any record whose next state is not the following record's state.
    pub fn episodes(&self) -> Vec<&[Transition]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 0..self.transitions.len() {
            let last = i + 1 == self.transitions.len()
                || self.transitions[i].done
                || self.transitions[i].next_state != self.transitions[i + 1].state;
            if last {
                out.push(&self.transitions[start..=i]);
                start = i + 1;
            }
        }
        out
    }

    /// Behaviour-cloning pairs with action chunks of length `chunk_len`.
    /// Chunks that run past the end of an episode repeat its last action.
    /// Returns flat row-major `(states, chunked_actions, count)`.
    pub fn bc_pairs(&self, chunk_len: usize) -> (Vec<f64>, Vec<f64>, usize) {
        assert!(chunk_len >= 1);
        let mut states = Vec::with_capacity(self.len() * self.state_dim);
        let mut actions = Vec::with_capacity(self.len() * self.action_dim * chunk_len);
        for ep in self.episodes() {
            for i in 0..ep.len() {
                states.extend_from_slice(&ep[i].state);
                for j in 0..chunk_len {
                    let k = (i + j).min(ep.len() - 1);
                    actions.extend_from_slice(&ep[k].action);
                }
            }
        }
        (states, actions, self.len())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let rec = record_len(self.state_dim, self.action_dim);
        let mut out = Vec::with_capacity(HEADER_LEN + rec * 8 * self.len());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.state_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.action_dim as u32).to_le_bytes());
        out.extend_from_slice(&self.env.code().to_le_bytes());
        out.extend_from_slice(&self.gamma.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for t in &self.transitions {
            let done = if t.done { 1.0f64 } else { 0.0 };
            for v in t
                .state
                .iter()
                .chain(&t.action)
                .chain(std::iter::once(&t.reward))
                .chain(&t.next_state)
                .chain(std::iter::once(&done))
            {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        if bytes.len() < 8 || &bytes[..8] != DATASET_MAGIC {
            return Err(DatasetError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(DatasetError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(8);
        if version != DATASET_VERSION {
            return Err(DatasetError::Version { found: version });
        }
        let state_dim = u32_at(12) as usize;
        let action_dim = u32_at(16) as usize;
        let env_code = u32_at(20);
        let env = EnvId::from_code(env_code).ok_or(DatasetError::UnknownEnv(env_code))?;
        let gamma = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let count = u64::from_le_bytes(bytes[32..40].try_into().unwrap()) as usize;
        let rec = record_len(state_dim, action_dim);
        let expected = count
            .checked_mul(rec * 8)
            .and_then(|b| b.checked_add(HEADER_LEN))
            .ok_or(DatasetError::Truncated {
                expected: usize::MAX,
                found: bytes.len(),
            })?;
        if bytes.len() != expected {
            return Err(DatasetError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        let values: Vec<f64> = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut transitions = Vec::with_capacity(count);
        for r in values.chunks_exact(rec) {
            let (state, r) = r.split_at(state_dim);
            let (action, r) = r.split_at(action_dim);
            let (reward, r) = (r[0], &r[1..]);
            let (next_state, r) = r.split_at(state_dim);
            transitions.push(Transition {
                state: state.to_vec(),
                action: action.to_vec(),
                reward,
                next_state: next_state.to_vec(),
                done: r[0] != 0.0,
            });
        }
        Ok(Self {
            env,
            state_dim,
            action_dim,
            gamma,
            transitions,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and checks the stored dimensions against the caller's task.
    pub fn load_expecting(
        path: impl AsRef<Path>,
        state_dim: usize,
        action_dim: usize,
    ) -> Result<Self, DatasetError> {
        let ds = Self::load(path)?;
        if ds.state_dim != state_dim || ds.action_dim != action_dim {
            return Err(DatasetError::DimMismatch {
                state: state_dim,
                action: action_dim,
                got_state: ds.state_dim,
                got_action: ds.action_dim,
            });
        }
        Ok(ds)
    }
}

fn record_len(state_dim: usize, action_dim: usize) -> usize {
    2 * state_dim + action_dim + 2
}
