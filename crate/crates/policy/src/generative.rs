use std::path::Path;

use dsrl_latent::{PolicyMap, QueryError};
use dsrl_numerics::{AdamConfig, Checkpoint};

use crate::schedule::NoiseSchedule;
use crate::{ActionScaling, DiffusionPolicy, FlowPolicy, PolicyError, Result};

const KIND_DIFFUSION: u64 = 0;
const KIND_FLOW: u64 = 1;

/// A trained generative policy of either family, exposed through the
/// deterministic `(state, noise) -> action` map.
#[derive(Debug, Clone)]
pub enum GenerativePolicy {
    Diffusion(DiffusionPolicy),
    Flow(FlowPolicy),
}

fn ck(e: dsrl_numerics::NumericsError) -> PolicyError {
    PolicyError::Checkpoint(e.to_string())
}

fn put_scaling(c: &mut Checkpoint, s: &ActionScaling) {
    c.put_f64("action.low", &s.low);
    c.put_f64("action.high", &s.high);
    c.put_f64("action.offset", &s.offset);
    c.put_f64("action.scale", &s.scale);
}

fn get_scaling(c: &Checkpoint) -> Result<ActionScaling> {
    Ok(ActionScaling {
        low: c.f64s("action.low").map_err(ck)?.to_vec(),
        high: c.f64s("action.high").map_err(ck)?.to_vec(),
        offset: c.f64s("action.offset").map_err(ck)?.to_vec(),
        scale: c.f64s("action.scale").map_err(ck)?.to_vec(),
    })
}

fn get_usize(c: &Checkpoint, name: &str) -> Result<usize> {
    Ok(c.u64(name).map_err(ck)? as usize)
}

impl GenerativePolicy {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        match self {
            GenerativePolicy::Diffusion(p) => {
                c.put_u64("kind", KIND_DIFFUSION);
                c.put_u64("state_dim", p.state_dim() as u64);
                c.put_u64("action_dim", p.action_dim() as u64);
                c.put_u64("chunk_len", p.chunk_len() as u64);
                c.put_mlp("denoiser", p.denoiser());
                c.put_f64("schedule.betas", p.schedule().betas());
                let steps: Vec<f64> = p.inference_timesteps().iter().map(|&t| t as f64).collect();
                c.put_f64("schedule.inference_steps", &steps);
                put_scaling(&mut c, p.scaling());
            }
            GenerativePolicy::Flow(p) => {
                c.put_u64("kind", KIND_FLOW);
                c.put_u64("state_dim", p.state_dim() as u64);
                c.put_u64("action_dim", p.action_dim() as u64);
                c.put_u64("chunk_len", p.chunk_len() as u64);
                c.put_mlp("velocity", p.velocity());
                c.put_u64("euler_steps", p.euler_steps() as u64);
                put_scaling(&mut c, p.scaling());
            }
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let state_dim = get_usize(c, "state_dim")?;
        let action_dim = get_usize(c, "action_dim")?;
        let chunk_len = get_usize(c, "chunk_len")?;
        let scaling = get_scaling(c)?;
        match c.u64("kind").map_err(ck)? {
            KIND_DIFFUSION => {
                let schedule = NoiseSchedule::from_betas(c.f64s("schedule.betas").map_err(ck)?.to_vec())?;
                let steps = c
                    .f64s("schedule.inference_steps")
                    .map_err(ck)?
                    .iter()
                    .map(|&t| t as usize)
                    .collect();
                let p = DiffusionPolicy::from_parts(
                    state_dim,
                    action_dim,
                    chunk_len,
                    c.mlp("denoiser").map_err(ck)?.clone(),
                    schedule,
                    steps,
                    scaling,
                    AdamConfig::default(),
                )?;
                Ok(GenerativePolicy::Diffusion(p))
            }
            KIND_FLOW => {
                let p = FlowPolicy::from_parts(
                    state_dim,
                    action_dim,
                    chunk_len,
                    c.mlp("velocity").map_err(ck)?.clone(),
                    get_usize(c, "euler_steps")?,
                    scaling,
                    AdamConfig::default(),
                )?;
                Ok(GenerativePolicy::Flow(p))
            }
            k => Err(PolicyError::Checkpoint(format!("unknown policy kind {k}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path).map_err(ck)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path).map_err(ck)?)
    }

    pub fn sample_batch(&self, states: &[f64], noises: &[f64], n: usize) -> Result<Vec<f64>> {
        match self {
            GenerativePolicy::Diffusion(p) => p.ddim_sample_batch(states, noises, n),
            GenerativePolicy::Flow(p) => p.sample_batch(states, noises, n),
        }
    }
}

fn to_query(e: PolicyError) -> QueryError {
    match e {
        PolicyError::Dimension { what, expected, got } => QueryError::Dimension { what, expected, got },
        other => QueryError::Remote(other.to_string()),
    }
}

impl PolicyMap for GenerativePolicy {
    fn state_dim(&self) -> usize {
        match self {
            GenerativePolicy::Diffusion(p) => p.state_dim(),
            GenerativePolicy::Flow(p) => p.state_dim(),
        }
    }

    fn action_dim(&self) -> usize {
        match self {
            GenerativePolicy::Diffusion(p) => p.action_dim(),
            GenerativePolicy::Flow(p) => p.action_dim(),
        }
    }

    fn chunk_len(&self) -> usize {
        match self {
            GenerativePolicy::Diffusion(p) => p.chunk_len(),
            GenerativePolicy::Flow(p) => p.chunk_len(),
        }
    }

    fn decode(&self, state: &[f64], noise: &[f64]) -> std::result::Result<Vec<f64>, QueryError> {
        if state.len() != self.state_dim() {
            return Err(QueryError::Dimension {
                what: "state",
                expected: self.state_dim(),
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
        self.sample_batch(state, noise, 1).map_err(to_query)
    }

    fn decode_batch(&self, states: &[f64], noises: &[f64], n: usize) -> std::result::Result<Vec<f64>, QueryError> {
        self.sample_batch(states, noises, n).map_err(to_query)
    }
}

impl From<DiffusionPolicy> for GenerativePolicy {
    fn from(p: DiffusionPolicy) -> Self {
        GenerativePolicy::Diffusion(p)
    }
}

impl From<FlowPolicy> for GenerativePolicy {
    fn from(p: FlowPolicy) -> Self {
        GenerativePolicy::Flow(p)
    }
}
