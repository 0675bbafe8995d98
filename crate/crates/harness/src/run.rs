use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;

use dsrl_agents::{Agent, Batch, NaAgent, Origin, Record, ReplayBuffer, SacAgent, SharedReplayBuffer, SquashedGaussianActor};
use dsrl_envs::Dataset;
use dsrl_latent::{Env, LatentActionMdp, PolicyMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::io_err;
use crate::{
    env_discount, evaluate_policy, load_policy, make_env, setup::check_dims, Algorithm, EvalPoint, HarnessError,
    MetricRecord, MetricsLog, Mode, RunConfig,
};

/// Independent seeds for each random stream of a run.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over (seed, stream)
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_AGENT: u64 = 1;
const STREAM_LEARNER: u64 = 2;
const STREAM_EVAL: u64 = 3;
const STREAM_COLLECTOR: u64 = 1000;
const STREAM_TRAIN_ENV: u64 = 2000;

/// Seed of the evaluation environment for a run seed; never used for training.
pub fn eval_seed(seed: u64) -> u64 {
    stream_seed(seed, STREAM_EVAL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub dataset_queries: u64,
    pub decoded_queries: u64,
    pub violations: u64,
    pub first_violation: Option<String>,
}

pub struct RunResult {
    pub agent: Agent,
    pub evals: Vec<EvalPoint>,
    pub env_steps: u64,
    pub updates: u64,
    pub train_episodes: usize,
    /// Buffer size when online interaction started (or offline training, if
    /// there is no online phase).
    pub initial_buffer_len: usize,
    pub audit: Option<AuditSummary>,
    /// Serialized metric records, kept when requested.
    pub metrics: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep every metric line in memory (returned in [`RunResult::metrics`]).
    pub keep_metrics: bool,
}

/// Loads the policy and dataset named in `cfg` and runs whichever mode its
/// step counts select.
pub fn run(cfg: &RunConfig) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let policy = load_policy(&cfg.policy, &cfg.env)?;
    let dataset = match &cfg.steer.dataset {
        Some(path) if cfg.mode()? != Mode::Online => Some(Dataset::load(path)?),
        _ => None,
    };
    run_with(cfg, policy, dataset.as_ref(), &RunOptions::default())
}

fn expect_mode(cfg: &RunConfig, mode: Mode) -> Result<(), HarnessError> {
    let actual = cfg.mode()?;
    if actual != mode {
        return Err(HarnessError::Config(format!("config describes a {actual:?} run, not {mode:?}")));
    }
    Ok(())
}

pub fn run_online(cfg: &RunConfig) -> Result<RunResult, HarnessError> {
    expect_mode(cfg, Mode::Online)?;
    run(cfg)
}

pub fn run_offline(cfg: &RunConfig) -> Result<RunResult, HarnessError> {
    expect_mode(cfg, Mode::Offline)?;
    run(cfg)
}

pub fn run_off2on(cfg: &RunConfig) -> Result<RunResult, HarnessError> {
    expect_mode(cfg, Mode::OfflineToOnline)?;
    run(cfg)
}

/// Runs with an already-opened policy and dataset.
pub fn run_with(
    cfg: &RunConfig,
    policy: Arc<dyn PolicyMap>,
    dataset: Option<&Dataset>,
    opts: &RunOptions,
) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let mode = cfg.mode()?;
    let mut ctx = Context::new(cfg, policy, opts)?;
    let mut initial_buffer_len = 0;
    if mode != Mode::Online {
        let dataset = dataset.ok_or_else(|| HarnessError::Config("offline training needs a dataset".into()))?;
        let records = dataset_records(dataset, ctx.policy.chunk_len(), &cfg.env, ctx.probe.as_ref())?;
        if records.len() > cfg.steer.buffer_capacity {
            return Err(HarnessError::Config(format!(
                "dataset has {} transitions, buffer holds {}",
                records.len(),
                cfg.steer.buffer_capacity
            )));
        }
        if mode == Mode::Offline {
            if let Agent::Na(a) = &mut ctx.agent {
                a.enable_audit(records.iter().map(|r| r.action.as_slice()));
            }
        }
        for r in records {
            ctx.buffer.push(r)?;
        }
        initial_buffer_len = ctx.buffer.len();
        if !ctx.buffer.is_empty() {
            ctx.offline_phase()?;
        }
    }
    if mode != Mode::Offline {
        initial_buffer_len = ctx.buffer.len();
        ctx.online_phase()?;
    }
    ctx.finish(initial_buffer_len)
}

/// Turns a dataset into action-chunk transitions: every start index of every
/// episode, the following `C` actions (the last one repeated past the end),
/// their discounted reward and the state after them.
pub fn dataset_records(
    dataset: &Dataset,
    chunk_len: usize,
    env_cfg: &crate::EnvConfig,
    env: &dyn Env,
) -> Result<Vec<Record>, HarnessError> {
    if dataset.state_dim != env.state_dim() || dataset.action_dim != env.action_dim() {
        return Err(HarnessError::Config(format!(
            "dataset is {}x{}, environment is {}x{}",
            dataset.state_dim,
            dataset.action_dim,
            env.state_dim(),
            env.action_dim()
        )));
    }
    let gamma = env_discount(env_cfg);
    if (dataset.gamma - gamma).abs() > 1e-12 {
        return Err(HarnessError::Config(format!("dataset gamma {} differs from env gamma {gamma}", dataset.gamma)));
    }
    let mut out = Vec::with_capacity(dataset.len());
    for ep in dataset.episodes() {
        for t in 0..ep.len() {
            let k = chunk_len.min(ep.len() - t);
            let mut action = Vec::with_capacity(chunk_len * dataset.action_dim);
            for j in 0..chunk_len {
                action.extend_from_slice(&ep[(t + j).min(ep.len() - 1)].action);
            }
            let mut reward = 0.0;
            let mut g = 1.0;
            for tr in &ep[t..t + k] {
                reward += g * tr.reward;
                g *= gamma;
            }
            let last = &ep[t + k - 1];
            out.push(Record {
                state: ep[t].state.clone(),
                action,
                latent: None,
                reward,
                next_state: last.next_state.clone(),
                done: last.done,
                discount: g,
                origin: Origin::Offline,
            });
        }
    }
    Ok(out)
}

type Mdp = LatentActionMdp<Box<dyn Env>, Arc<dyn PolicyMap>>;

struct Collector {
    mdp: Mdp,
    state: Vec<f64>,
    ret: f64,
    g: f64,
    len: usize,
    rng: ChaCha8Rng,
}

struct StepReport {
    raw_steps: usize,
    episode: Option<(f64, bool, usize)>,
}

impl Collector {
    /// One latent step: `w ~ N(0, I)` when `actor` is `None`, otherwise a
    /// stochastic actor sample.
    fn step(&mut self, actor: Option<&SquashedGaussianActor>, buffer: &SharedReplayBuffer) -> Result<StepReport, HarnessError> {
        let w = match actor {
            Some(a) => a.sample(&self.state, 1, &mut self.rng)?.w,
            None => (0..self.mdp.latent_dim()).map(|_| self.rng.sample(StandardNormal)).collect(),
        };
        let out = self.mdp.chunk_step(&w)?;
        let gamma = self.mdp.env().discount();
        let discount = gamma.powi(out.raw_steps as i32);
        self.ret += self.g * out.reward;
        self.g *= discount;
        self.len += out.raw_steps;
        buffer.push(Record {
            state: std::mem::take(&mut self.state),
            action: out.action,
            latent: Some(out.latent),
            reward: out.reward,
            next_state: out.next_state.clone(),
            done: out.terminated,
            discount,
            origin: Origin::Online,
        })?;
        let episode = if out.terminated || out.truncated {
            let summary = (self.ret, out.success, self.len);
            self.state = self.mdp.reset();
            self.ret = 0.0;
            self.g = 1.0;
            self.len = 0;
            Some(summary)
        } else {
            self.state = out.next_state;
            None
        };
        Ok(StepReport {
            raw_steps: out.raw_steps,
            episode,
        })
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    policy: Arc<dyn PolicyMap>,
    probe: Box<dyn Env>,
    agent: Agent,
    buffer: SharedReplayBuffer,
    log: MetricsLog,
    rng: ChaCha8Rng,
    env_steps: u64,
    updates: u64,
    train_episodes: usize,
    evals: Vec<EvalPoint>,
    out_dir: Option<PathBuf>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a RunConfig, policy: Arc<dyn PolicyMap>, opts: &RunOptions) -> Result<Self, HarnessError> {
        let probe = make_env(&cfg.env, 0);
        check_dims(policy.as_ref(), probe.as_ref())?;
        let agent_cfg = cfg.agent_config(probe.state_dim(), policy.latent_dim(), policy.latent_dim())?;
        let mut agent_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, STREAM_AGENT));
        let agent = match cfg.algorithm {
            Algorithm::Sac => Agent::Sac(SacAgent::new(agent_cfg, &mut agent_rng)?),
            Algorithm::Na => Agent::Na(NaAgent::new(agent_cfg, &mut agent_rng)?),
        };
        let buffer = SharedReplayBuffer::new(ReplayBuffer::new(
            cfg.steer.buffer_capacity,
            probe.state_dim(),
            policy.latent_dim(),
            policy.latent_dim(),
        ));
        let out_dir = cfg.out_dir.clone();
        let log = match &out_dir {
            Some(dir) => {
                fs::create_dir_all(dir.join("checkpoints")).map_err(io_err(dir))?;
                let path = dir.join("config.toml");
                fs::write(&path, cfg.to_toml_string()).map_err(io_err(&path))?;
                MetricsLog::with_file(&dir.join("metrics.jsonl"), opts.keep_metrics)?
            }
            None => MetricsLog::new(opts.keep_metrics),
        };
        Ok(Self {
            cfg,
            policy,
            probe,
            agent,
            buffer,
            log,
            rng: ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, STREAM_LEARNER)),
            env_steps: 0,
            updates: 0,
            train_episodes: 0,
            evals: Vec::new(),
            out_dir,
        })
    }

    fn collectors(&self) -> Result<Vec<Collector>, HarnessError> {
        (0..self.cfg.steer.parallel_envs as u64)
            .map(|k| {
                let env = make_env(&self.cfg.env, stream_seed(self.cfg.seed, STREAM_TRAIN_ENV + k));
                let mut mdp = LatentActionMdp::new(env, Arc::clone(&self.policy), self.cfg.half_width())?;
                let state = mdp.reset();
                Ok(Collector {
                    mdp,
                    state,
                    ret: 0.0,
                    g: 1.0,
                    len: 0,
                    rng: ChaCha8Rng::seed_from_u64(stream_seed(self.cfg.seed, STREAM_COLLECTOR + k)),
                })
            })
            .collect()
    }

    fn note(&mut self, report: StepReport) -> Result<(), HarnessError> {
        self.env_steps += report.raw_steps as u64;
        if let Some((ret, success, length)) = report.episode {
            self.train_episodes += 1;
            self.log.record(&MetricRecord::Episode {
                env_steps: self.env_steps,
                ret,
                success,
                length,
            })?;
        }
        Ok(())
    }

    fn learn(&mut self, distill: bool) -> Result<(), HarnessError> {
        let batch = self.buffer.sample(self.cfg.steer.batch_size, self.cfg.steer.stratified, &mut self.rng)?;
        let result = match &mut self.agent {
            Agent::Sac(a) => a.update(&batch, &mut self.rng),
            Agent::Na(a) => a.update(&batch, self.policy.as_ref(), distill, &mut self.rng),
        };
        let metrics = match result.map_err(HarnessError::from) {
            Ok(m) => m,
            Err(HarnessError::NonFinite { message, .. }) => {
                let dump = self.dump_nonfinite(&batch, &message);
                return Err(HarnessError::NonFinite { message, dump });
            }
            Err(e) => return Err(e),
        };
        self.updates += 1;
        if self.updates.is_multiple_of(self.cfg.steer.log_every as u64) {
            self.log.record(&MetricRecord::update(self.updates, self.env_steps, &metrics))?;
        }
        Ok(())
    }

    /// The updates of one round; the first `qw_steps` of them also train `Q^W`.
    fn learn_round(&mut self) -> Result<(), HarnessError> {
        for i in 0..self.cfg.steer.utd {
            self.learn(i < self.cfg.steer.qw_steps)?;
        }
        Ok(())
    }

    fn offline_phase(&mut self) -> Result<(), HarnessError> {
        let (steps, interval) = (self.cfg.steer.offline_steps as u64, self.cfg.steer.eval_interval as u64);
        let utd = self.cfg.steer.utd as u64;
        for i in 0..steps {
            self.learn(i % utd < self.cfg.steer.qw_steps as u64)?;
            if (i + 1) % interval == 0 || i + 1 == steps {
                self.evaluate()?;
            }
        }
        Ok(())
    }

    fn online_phase(&mut self) -> Result<(), HarnessError> {
        let s = &self.cfg.steer;
        let (total, interval) = (s.online_steps as u64, s.eval_interval as u64);
        let (initial, deterministic) = (s.initial_steps as u64, s.deterministic);
        let mut collectors = self.collectors()?;
        let mut next_eval = self.env_steps + interval;
        let start = self.env_steps;
        // warmup: the base policy with w ~ N(0, I), round-robin
        'warm: while self.env_steps - start < initial.min(total) {
            for c in collectors.iter_mut() {
                let report = c.step(None, &self.buffer)?;
                self.note(report)?;
                if self.env_steps - start >= initial.min(total) {
                    break 'warm;
                }
            }
        }
        while self.env_steps - start < total {
            if deterministic || self.buffer.is_empty() {
                for c in collectors.iter_mut() {
                    let report = c.step(Some(self.agent.actor()), &self.buffer)?;
                    self.note(report)?;
                }
                self.learn_round()?;
            } else {
                self.concurrent_round(&mut collectors)?;
            }
            if self.env_steps >= next_eval || self.env_steps - start >= total {
                self.evaluate()?;
                while next_eval <= self.env_steps {
                    next_eval += interval;
                }
            }
        }
        Ok(())
    }

    /// Collectors act with a snapshot of the actor on their own threads while
    /// the learner runs this round's updates against the shared buffer.
    fn concurrent_round(&mut self, collectors: &mut [Collector]) -> Result<(), HarnessError> {
        let snapshot = self.agent.actor().clone();
        let buffer = self.buffer.clone();
        let reports = thread::scope(|scope| {
            let handles: Vec<_> = collectors
                .iter_mut()
                .map(|c| {
                    let (snapshot, buffer) = (&snapshot, &buffer);
                    scope.spawn(move || c.step(Some(snapshot), buffer))
                })
                .collect();
            let learned = self.learn_round();
            let reports: Vec<_> = handles
                .into_iter()
                .map(|h| h.join().expect("collector thread panicked"))
                .collect();
            learned.map(|_| reports)
        })?;
        for report in reports {
            self.note(report?)?;
        }
        Ok(())
    }

    fn evaluate(&mut self) -> Result<(), HarnessError> {
        let result = evaluate_policy(
            Some(self.agent.actor()),
            self.policy.as_ref(),
            &self.cfg.env,
            self.cfg.steer.eval_episodes,
            eval_seed(self.cfg.seed),
        )?;
        let wall_secs = (!self.cfg.steer.deterministic).then(|| self.log.elapsed_secs());
        self.log.record(&MetricRecord::Eval {
            env_steps: self.env_steps,
            updates: self.updates,
            result: result.clone(),
            wall_secs,
        })?;
        self.evals.push(EvalPoint {
            env_steps: self.env_steps,
            updates: self.updates,
            result,
        });
        if let Some(dir) = &self.out_dir {
            let path = dir
                .join("checkpoints")
                .join(format!("agent_{:010}_{:010}.ckpt", self.env_steps, self.updates));
            self.agent.to_checkpoint().save(&path)?;
        }
        self.log.flush()
    }

    fn dump_nonfinite(&self, batch: &Batch, message: &str) -> Option<PathBuf> {
        let dir = self.out_dir.as_ref()?.join("nonfinite");
        fs::create_dir_all(&dir).ok()?;
        let body = serde_json::json!({
            "message": message,
            "updates": self.updates,
            "env_steps": self.env_steps,
            "len": batch.len,
            "states": batch.states,
            "actions": batch.actions,
            "latents": batch.latents,
            "rewards": batch.rewards,
            "next_states": batch.next_states,
            "dones": batch.dones,
            "discounts": batch.discounts,
        });
        // serde_json writes non-finite numbers as null, which is the point
        fs::write(dir.join("batch.json"), body.to_string()).ok()?;
        self.agent.to_checkpoint().save(dir.join("agent.ckpt")).ok()?;
        Some(dir)
    }

    fn finish(mut self, initial_buffer_len: usize) -> Result<RunResult, HarnessError> {
        if let Some(dir) = &self.out_dir {
            self.agent.to_checkpoint().save(dir.join("agent_final.ckpt"))?;
        }
        self.log.flush()?;
        let audit = match &self.agent {
            Agent::Na(a) => a.audit().map(|q| AuditSummary {
                dataset_queries: q.dataset_queries,
                decoded_queries: q.decoded_queries,
                violations: q.violations,
                first_violation: q.first_violation.clone(),
            }),
            Agent::Sac(_) => None,
        };
        Ok(RunResult {
            metrics: self.log.lines().to_vec(),
            agent: self.agent,
            evals: self.evals,
            env_steps: self.env_steps,
            updates: self.updates,
            train_episodes: self.train_episodes,
            initial_buffer_len,
            audit,
        })
    }
}
