use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use dsrl_agents::UpdateMetrics;
use serde::{Deserialize, Serialize};

use crate::error::io_err;
use crate::{EvalResult, HarnessError};

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricRecord {
    Update {
        update: u64,
        env_steps: u64,
        critic_loss: f64,
        actor_loss: f64,
        alpha_loss: f64,
        alpha: f64,
        entropy: f64,
        q_mean: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        qw_loss: Option<f64>,
    },
    Episode {
        env_steps: u64,
        #[serde(rename = "return")]
        ret: f64,
        success: bool,
        length: usize,
    },
    Eval {
        env_steps: u64,
        updates: u64,
        #[serde(flatten)]
        result: EvalResult,
        /// Omitted in deterministic runs so their streams compare bit-exactly.
        #[serde(skip_serializing_if = "Option::is_none")]
        wall_secs: Option<f64>,
    },
}

impl MetricRecord {
    pub fn update(update: u64, env_steps: u64, m: &UpdateMetrics) -> Self {
        MetricRecord::Update {
            update,
            env_steps,
            critic_loss: m.critic_loss,
            actor_loss: m.actor_loss,
            alpha_loss: m.alpha_loss,
            alpha: m.alpha,
            entropy: m.entropy,
            q_mean: m.q_mean,
            qw_loss: m.qw_loss,
        }
    }

    pub fn env_steps(&self) -> u64 {
        match self {
            MetricRecord::Update { env_steps, .. }
            | MetricRecord::Episode { env_steps, .. }
            | MetricRecord::Eval { env_steps, .. } => *env_steps,
        }
    }
}

/// Append-only record stream, optionally mirrored to a JSONL file. Keeps the
/// serialized lines in memory when asked to, which is what the determinism
/// checks compare.
pub struct MetricsLog {
    file: Option<BufWriter<File>>,
    keep_lines: bool,
    lines: Vec<String>,
    last_env_steps: u64,
    started: Instant,
}

impl MetricsLog {
    pub fn new(keep_lines: bool) -> Self {
        Self {
            file: None,
            keep_lines,
            lines: Vec::new(),
            last_env_steps: 0,
            started: Instant::now(),
        }
    }

    pub fn with_file(path: &Path, keep_lines: bool) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(io_err(path))?;
        Ok(Self {
            file: Some(BufWriter::new(file)),
            ..Self::new(keep_lines)
        })
    }

    pub fn elapsed_secs(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn record(&mut self, record: &MetricRecord) -> Result<(), HarnessError> {
        let steps = record.env_steps();
        assert!(steps >= self.last_env_steps, "env step counter went backwards");
        self.last_env_steps = steps;
        let line = serde_json::to_string(record).expect("metric records serialize");
        if let Some(f) = &mut self.file {
            writeln!(f, "{line}").map_err(|e| HarnessError::Io {
                path: "metrics.jsonl".into(),
                source: e,
            })?;
        }
        if self.keep_lines {
            self.lines.push(line);
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), HarnessError> {
        if let Some(f) = &mut self.file {
            f.flush().map_err(|e| HarnessError::Io {
                path: "metrics.jsonl".into(),
                source: e,
            })?;
        }
        Ok(())
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }
}

/// An evaluation taken during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub env_steps: u64,
    pub updates: u64,
    pub result: EvalResult,
}

/// Mean success over the evaluations in the last `fraction` of the run,
/// measured on the x-axis used for the run (env steps, or updates when no env
/// steps were taken). Always includes the final evaluation.
pub fn final_window_success(evals: &[EvalPoint], fraction: f64) -> Option<f64> {
    let last = evals.last()?;
    let offline = last.env_steps == 0;
    let x = |e: &EvalPoint| if offline { e.updates } else { e.env_steps } as f64;
    let cutoff = x(last) * (1.0 - fraction);
    let window: Vec<f64> = evals.iter().filter(|e| x(e) >= cutoff).map(|e| e.result.success_rate).collect();
    Some(window.iter().sum::<f64>() / window.len() as f64)
}

/// Env steps at the first evaluation that starts a run of `consecutive`
/// evaluations all at or above `threshold`. A run cut short by the end of
/// training counts if every remaining evaluation qualifies.
pub fn steps_to_sustain(evals: &[EvalPoint], threshold: f64, consecutive: usize) -> Option<u64> {
    (0..evals.len()).find_map(|i| {
        let window = &evals[i..(i + consecutive).min(evals.len())];
        window
            .iter()
            .all(|e| e.result.success_rate >= threshold)
            .then_some(evals[i].env_steps)
    })
}
