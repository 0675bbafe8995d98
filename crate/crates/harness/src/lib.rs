//! Experiment orchestration: demos, behavioral cloning, online, offline and
//! offline-to-online steering, evaluation and metrics.
//!
//! Output directory layout for a run with `out_dir` set:
//!
//! ```text
//! out_dir/
//!   config.toml                          resolved run config
//!   metrics.jsonl                        one record per update/episode/eval
//!   checkpoints/agent_<env>_<upd>.ckpt   agent at each evaluation
//!   agent_final.ckpt
//!   nonfinite/{batch.json,agent.ckpt}    only after a non-finite loss
//! ```

mod config;
mod error;
mod eval;
mod metrics;
mod pretrain;
mod run;
mod setup;

pub use config::{parse_activation, AgentSection, Algorithm, EnvConfig, Mode, PolicyConfig, RunConfig, SteerConfig};
pub use error::HarnessError;
pub use eval::{evaluate_policy, EvalResult};
pub use metrics::{final_window_success, steps_to_sustain, EvalPoint, MetricRecord, MetricsLog};
pub use pretrain::{pretrain, Family, PretrainConfig};
pub use run::{
    dataset_records, eval_seed, run, run_off2on, run_offline, run_online, run_with, stream_seed, AuditSummary,
    RunOptions, RunResult,
};
pub use setup::{check_dims, env_id, load_policy, make_env};

/// Per-step discount of the configured environment.
pub fn env_discount(env: &EnvConfig) -> f64 {
    make_env(env, 0).discount()
}
