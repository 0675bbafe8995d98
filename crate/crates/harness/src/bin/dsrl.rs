use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use dsrl_agents::Agent;
use dsrl_endpoint::Server;
use dsrl_envs::{generate_demos, Dataset};
use dsrl_harness::{
    evaluate_policy, load_policy, pretrain, run, EnvConfig, Family, HarnessError, PolicyConfig, PretrainConfig,
    RunConfig,
};
use dsrl_numerics::Checkpoint;

#[derive(Parser)]
#[command(name = "dsrl", about = "Steer pretrained diffusion and flow policies through their input noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Diffusion,
    Flow,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out scripted point-mass demonstrations.
    Demos {
        /// TOML file with an environment table; defaults to the standard point mass.
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        /// Fraction of episodes that go to the rewarded goal.
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Behavioral cloning of a diffusion or flow policy.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "diffusion")]
        family: FamilyArg,
        #[arg(long, default_value_t = 4000)]
        steps: usize,
        #[arg(long, default_value_t = 256)]
        batch: usize,
        #[arg(long, value_delimiter = ',', default_value = "64,64")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        chunk: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a steering agent; the config decides online, offline or both.
    Steer {
        #[arg(long)]
        config: PathBuf,
    },
    /// Success rate of the base policy, or of a steered one with --agent.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        agent: Option<PathBuf>,
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve a policy checkpoint over TCP.
    Serve {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
    },
}

#[derive(serde::Deserialize)]
struct EnvFile {
    env: EnvConfig,
}

fn load_env(path: Option<&Path>) -> Result<EnvConfig, HarnessError> {
    let Some(path) = path else {
        return Ok(EnvConfig::point_mass());
    };
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::ConfigFile {
        path: path.to_path_buf(),
        source,
    })?;
    let file: EnvFile = toml::from_str(&text).map_err(|e| HarnessError::ConfigParse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(file.env)
}

fn checkpoint_policy(path: &Path) -> PolicyConfig {
    PolicyConfig {
        checkpoint: Some(path.to_path_buf()),
        ..PolicyConfig::default()
    }
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Demos {
            env,
            episodes,
            p,
            noise,
            seed,
            out,
        } => {
            let env = load_env(env.as_deref())?;
            let cfg = env
                .point_mass_config()
                .ok_or_else(|| HarnessError::Config("demos are only scripted for the point mass".into()))?;
            let ds = generate_demos(&cfg, p, episodes, noise, seed)?;
            ds.save(&out)?;
            let successes = ds.episodes().iter().filter(|ep| ep.last().is_some_and(|t| t.reward > 0.0)).count();
            println!("wrote {} transitions, {episodes} episodes ({successes} rewarded) to {}", ds.len(), out.display());
        }
        Command::Pretrain {
            data,
            env,
            family,
            steps,
            batch,
            hidden,
            chunk,
            lr,
            seed,
            out,
        } => {
            let env = load_env(env.as_deref())?;
            let dataset = Dataset::load(&data)?;
            let cfg = PretrainConfig {
                family: match family {
                    FamilyArg::Diffusion => Family::Diffusion,
                    FamilyArg::Flow => Family::Flow,
                },
                chunk_len: chunk,
                hidden,
                lr,
                steps,
                batch_size: batch,
                seed,
                ..PretrainConfig::default()
            };
            let (policy, losses) = pretrain(&dataset, &env, &cfg)?;
            policy.save(&out)?;
            let tail = &losses[losses.len().saturating_sub(100)..];
            let mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
            println!("trained {steps} steps, final loss {mean:.5}; saved {}", out.display());
        }
        Command::Steer { config } => {
            let cfg = RunConfig::load(&config)?;
            let result = run(&cfg)?;
            if let Some(last) = result.evals.last() {
                println!(
                    "{} env steps, {} updates, final success {:.3}",
                    result.env_steps, result.updates, last.result.success_rate
                );
            }
            if let Some(audit) = &result.audit {
                println!(
                    "critic queries: {} dataset, {} decoded, {} violations",
                    audit.dataset_queries, audit.decoded_queries, audit.violations
                );
            }
        }
        Command::Eval {
            policy,
            agent,
            env,
            episodes,
            seed,
        } => {
            let env = load_env(env.as_deref())?;
            let map = load_policy(&checkpoint_policy(&policy), &env)?;
            let agent = agent
                .map(|path| -> Result<Agent, HarnessError> { Ok(Agent::from_checkpoint(&Checkpoint::load(path)?)?) })
                .transpose()?;
            let result = evaluate_policy(agent.as_ref().map(Agent::actor), map.as_ref(), &env, episodes, seed)?;
            println!("{}", serde_json::to_string(&result).expect("eval result serializes"));
        }
        Command::Serve { policy, env, bind } => {
            let env = load_env(env.as_deref())?;
            let map = load_policy(&checkpoint_policy(&policy), &env)?;
            let server = Server::bind(Arc::clone(&map), bind.as_str())?;
            println!("serving on {}", server.local_addr());
            server.wait();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
