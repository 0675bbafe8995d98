use std::path::{Path, PathBuf};
use std::time::Duration;

use dsrl_agents::{AgentConfig, Aggregation};
use dsrl_envs::PointMassConfig;
use dsrl_numerics::Activation;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "dsrl-sac")]
    Sac,
    #[serde(rename = "dsrl-na")]
    Na,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sac => "dsrl-sac",
            Algorithm::Na => "dsrl-na",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Online,
    Offline,
    OfflineToOnline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvConfig {
    PointMass {
        #[serde(default = "defaults::max_speed")]
        max_speed: f64,
        #[serde(default = "defaults::goal_radius")]
        goal_radius: f64,
        #[serde(default = "defaults::start_jitter")]
        start_jitter: f64,
        #[serde(default = "defaults::horizon")]
        horizon: usize,
        #[serde(default = "defaults::gamma")]
        gamma: f64,
    },
    Bandit {
        target: Vec<f64>,
        #[serde(default = "defaults::bandit_low")]
        low: f64,
        #[serde(default = "defaults::bandit_high")]
        high: f64,
        #[serde(default = "defaults::bandit_radius")]
        success_radius: f64,
    },
}

impl EnvConfig {
    pub fn point_mass() -> Self {
        let d = PointMassConfig::default();
        EnvConfig::PointMass {
            max_speed: d.max_speed,
            goal_radius: d.goal_radius,
            start_jitter: d.start_jitter,
            horizon: d.horizon,
            gamma: d.gamma,
        }
    }

    pub fn point_mass_config(&self) -> Option<PointMassConfig> {
        match *self {
            EnvConfig::PointMass {
                max_speed,
                goal_radius,
                start_jitter,
                horizon,
                gamma,
            } => Some(PointMassConfig {
                max_speed,
                goal_radius,
                start_jitter,
                horizon,
                gamma,
                ..PointMassConfig::default()
            }),
            EnvConfig::Bandit { .. } => None,
        }
    }
}

/// Where the generative policy comes from. Exactly one field is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// Local checkpoint written by `dsrl pretrain`.
    pub checkpoint: Option<PathBuf>,
    /// `host:port` of a `dsrl serve` endpoint.
    pub remote: Option<String>,
    /// Chunk length of the remote policy; local checkpoints record their own.
    #[serde(default = "defaults::one")]
    pub remote_chunk_len: usize,
    #[serde(default = "defaults::timeout_ms")]
    pub timeout_ms: u64,
    /// `decode(s, w) = w` with unnormalized actions.
    #[serde(default)]
    pub identity: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            remote: None,
            remote_chunk_len: defaults::one(),
            timeout_ms: defaults::timeout_ms(),
            identity: false,
        }
    }
}

impl PolicyConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteerConfig {
    /// Noise box half-width; defaults to 1.5 online and 0.75 offline.
    pub half_width: Option<f64>,
    /// Gradient updates per collection round.
    #[serde(default = "defaults::utd")]
    pub utd: usize,
    /// How many of each round's updates also train `Q^W` (DSRL-NA only).
    #[serde(default = "defaults::qw_steps")]
    pub qw_steps: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::parallel_envs")]
    pub parallel_envs: usize,
    /// Raw env steps collected with `w ~ N(0, I)` before learning starts.
    #[serde(default = "defaults::initial_steps")]
    pub initial_steps: usize,
    /// Raw env steps of online interaction, including the initial rollout.
    #[serde(default)]
    pub online_steps: usize,
    /// Gradient steps on the offline dataset before any online phase.
    #[serde(default)]
    pub offline_steps: usize,
    /// Env steps (online) or gradient steps (offline) between evaluations.
    #[serde(default = "defaults::eval_interval")]
    pub eval_interval: usize,
    #[serde(default = "defaults::eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "defaults::buffer_capacity")]
    pub buffer_capacity: usize,
    pub dataset: Option<PathBuf>,
    /// Sequential collection and updates; bit-reproducible for a seed.
    #[serde(default = "defaults::yes")]
    pub deterministic: bool,
    /// 50/50 offline/online batches in off-to-online runs.
    #[serde(default)]
    pub stratified: bool,
    /// Emit every n-th update record.
    #[serde(default = "defaults::one")]
    pub log_every: usize,
}

impl Default for SteerConfig {
    fn default() -> Self {
        toml::from_str("").expect("every steer field has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default = "defaults::hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "defaults::activation")]
    pub activation: String,
    #[serde(default = "defaults::yes")]
    pub layer_norm: bool,
    /// Defaults to 2 online and 10 offline.
    pub num_critics: Option<usize>,
    /// "min" or "mean"; defaults to min online and mean offline.
    pub aggregation: Option<String>,
    #[serde(default = "defaults::qw_critics")]
    pub qw_critics: usize,
    #[serde(default = "defaults::lr")]
    pub actor_lr: f64,
    #[serde(default = "defaults::lr")]
    pub critic_lr: f64,
    #[serde(default = "defaults::lr")]
    pub alpha_lr: f64,
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    #[serde(default = "defaults::init_alpha")]
    pub init_alpha: f64,
    #[serde(default = "defaults::yes")]
    pub learn_alpha: bool,
    #[serde(default)]
    pub target_entropy: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        toml::from_str("").expect("every agent field has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seed: u64,
    /// Metrics, checkpoints and diagnostics go here when set.
    pub out_dir: Option<PathBuf>,
    pub env: EnvConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub steer: SteerConfig,
    #[serde(default)]
    pub agent: AgentSection,
}

mod defaults {
    pub fn max_speed() -> f64 {
        0.2
    }
    pub fn goal_radius() -> f64 {
        0.1
    }
    pub fn start_jitter() -> f64 {
        0.05
    }
    pub fn horizon() -> usize {
        60
    }
    pub fn gamma() -> f64 {
        0.99
    }
    pub fn bandit_low() -> f64 {
        -1.0
    }
    pub fn bandit_high() -> f64 {
        1.0
    }
    pub fn bandit_radius() -> f64 {
        0.1
    }
    pub fn one() -> usize {
        1
    }
    pub fn timeout_ms() -> u64 {
        5000
    }
    pub fn utd() -> usize {
        20
    }
    pub fn qw_steps() -> usize {
        10
    }
    pub fn batch_size() -> usize {
        256
    }
    pub fn parallel_envs() -> usize {
        4
    }
    pub fn initial_steps() -> usize {
        1000
    }
    pub fn eval_interval() -> usize {
        1000
    }
    pub fn eval_episodes() -> usize {
        50
    }
    pub fn buffer_capacity() -> usize {
        1_000_000
    }
    pub fn yes() -> bool {
        true
    }
    pub fn hidden() -> Vec<usize> {
        vec![256, 256, 256]
    }
    pub fn activation() -> String {
        "gelu".into()
    }
    pub fn qw_critics() -> usize {
        2
    }
    pub fn lr() -> f64 {
        3e-4
    }
    pub fn tau() -> f64 {
        0.005
    }
    pub fn init_alpha() -> f64 {
        1.0
    }
}

pub fn parse_activation(name: &str) -> Result<Activation, HarnessError> {
    match name.to_ascii_lowercase().as_str() {
        "gelu" => Ok(Activation::Gelu),
        "tanh" => Ok(Activation::Tanh),
        other => Err(HarnessError::Config(format!("unknown activation {other:?}"))),
    }
}

impl RunConfig {
    /// A config with every default, for the given algorithm and environment.
    pub fn new(algorithm: Algorithm, env: EnvConfig) -> Self {
        Self {
            algorithm,
            seed: 0,
            out_dir: None,
            env,
            policy: PolicyConfig::default(),
            steer: SteerConfig::default(),
            agent: AgentSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a TOML config. Relative paths in it are taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| HarnessError::ConfigParse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if let Some(base) = path.parent() {
            for p in [&mut cfg.policy.checkpoint, &mut cfg.steer.dataset, &mut cfg.out_dir].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run configs always serialize")
    }

    pub fn mode(&self) -> Result<Mode, HarnessError> {
        match (self.steer.online_steps > 0, self.steer.offline_steps > 0) {
            (true, false) => Ok(Mode::Online),
            (false, true) => Ok(Mode::Offline),
            (true, true) => Ok(Mode::OfflineToOnline),
            (false, false) => Err(HarnessError::Config(
                "set steer.online_steps, steer.offline_steps, or both".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let s = &self.steer;
        let mode = self.mode()?;
        if s.utd == 0 {
            return bad("steer.utd must be at least 1".into());
        }
        if s.parallel_envs == 0 {
            return bad("steer.parallel_envs must be at least 1".into());
        }
        if s.batch_size == 0 || s.eval_interval == 0 || s.buffer_capacity == 0 || s.log_every == 0 {
            return bad("batch_size, eval_interval, buffer_capacity and log_every must be positive".into());
        }
        if s.qw_steps > s.utd {
            return bad(format!("steer.qw_steps {} exceeds steer.utd {}", s.qw_steps, s.utd));
        }
        if let Some(b) = s.half_width {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("steer.half_width {b}"));
            }
        }
        if mode != Mode::Online && s.dataset.is_none() {
            return bad("offline training needs steer.dataset".into());
        }
        if mode != Mode::Online && self.algorithm == Algorithm::Sac {
            return bad("dsrl-sac needs latent-labelled transitions and cannot train on an action-space dataset; use dsrl-na".into());
        }
        let p = &self.policy;
        let sources = p.checkpoint.is_some() as u8 + p.remote.is_some() as u8 + p.identity as u8;
        if sources != 1 {
            return bad("set exactly one of policy.checkpoint, policy.remote, policy.identity".into());
        }
        if p.remote_chunk_len == 0 || p.timeout_ms == 0 {
            return bad("policy.remote_chunk_len and policy.timeout_ms must be positive".into());
        }
        if let EnvConfig::Bandit { target, low, high, .. } = &self.env {
            if target.is_empty() || !(low < high) {
                return bad("bandit needs a non-empty target and low < high".into());
            }
        }
        parse_activation(&self.agent.activation)?;
        if let Some(a) = &self.agent.aggregation {
            parse_aggregation(a)?;
        }
        Ok(())
    }

    pub fn half_width(&self) -> f64 {
        match (self.steer.half_width, self.mode()) {
            (Some(b), _) => b,
            (None, Ok(Mode::Offline)) => 0.75,
            (None, _) => 1.5,
        }
    }

    /// Agent hyperparameters for the given dimensions, with mode-dependent
    /// defaults filled in.
    pub fn agent_config(&self, state_dim: usize, latent_dim: usize, action_dim: usize) -> Result<AgentConfig, HarnessError> {
        let a = &self.agent;
        let offline = self.mode()? == Mode::Offline;
        let mut cfg = if offline {
            AgentConfig::offline(state_dim, latent_dim, action_dim)
        } else {
            AgentConfig::new(state_dim, latent_dim, action_dim)
        };
        cfg.half_width = self.half_width();
        cfg.hidden = a.hidden.clone();
        cfg.activation = parse_activation(&a.activation)?;
        cfg.layer_norm = a.layer_norm;
        if let Some(n) = a.num_critics {
            cfg.num_critics = n;
        }
        if let Some(agg) = &a.aggregation {
            cfg.aggregation = parse_aggregation(agg)?;
        }
        cfg.qw_critics = a.qw_critics;
        cfg.actor_lr = a.actor_lr;
        cfg.critic_lr = a.critic_lr;
        cfg.alpha_lr = a.alpha_lr;
        cfg.tau = a.tau;
        cfg.init_alpha = a.init_alpha;
        cfg.learn_alpha = a.learn_alpha;
        cfg.target_entropy = a.target_entropy;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_aggregation(name: &str) -> Result<Aggregation, HarnessError> {
    match name.to_ascii_lowercase().as_str() {
        "min" => Ok(Aggregation::Min),
        "mean" => Ok(Aggregation::Mean),
        other => Err(HarnessError::Config(format!("unknown aggregation {other:?}"))),
    }
}
