//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use dsrl_agents::{AgentConfig, NaAgent, Origin, Record, ReplayBuffer, SacAgent, Temperature};
use dsrl_endpoint::{ClientConfig, RemoteClient, Response, Server};
use dsrl_envs::{generate_demos, ChainMdp, PointMassConfig, PointMassEnv, ThresholdDecoder};
use dsrl_harness::{
    evaluate_policy, final_window_success, run, steps_to_sustain, Algorithm, EnvConfig, Family,
    PretrainConfig, RunConfig, RunResult,
};
use dsrl_latent::{discounted_sum, noise_broadcast, Env, LatentActionMdp, PolicyMap, QueryError};
use dsrl_numerics::{Activation, Mlp};
use dsrl_policy::{DiffusionConfig, DiffusionPolicy, FlowConfig, FlowPolicy, GenerativePolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

const SEEDS: [u64; 3] = [1, 2, 3];

/// Demonstrations and behavior-cloned policies shared by the criteria.
struct Fixtures {
    dir: tempfile::TempDir,
    demos: PathBuf,
    bc1: PathBuf,
    bc8: PathBuf,
    flow: PathBuf,
}

impl Fixtures {
    fn build() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let env = EnvConfig::point_mass();
        let demos = generate_demos(&PointMassConfig::default(), 0.5, 200, 0.02, 0).unwrap();
        let demos_path = dir.path().join("demos.bin");
        demos.save(&demos_path).unwrap();
        let train = |family, chunk_len, steps, name: &str| {
            let cfg = PretrainConfig {
                family,
                chunk_len,
                steps,
                ..PretrainConfig::default()
            };
            let (policy, _) = dsrl_harness::pretrain(&demos, &env, &cfg).unwrap();
            let path = dir.path().join(name);
            policy.save(&path).unwrap();
            path
        };
        Self {
            bc1: train(Family::Diffusion, 1, 4000, "bc1.ckpt"),
            bc8: train(Family::Diffusion, 8, 4000, "bc8.ckpt"),
            flow: train(Family::Flow, 1, 1000, "flow.ckpt"),
            demos: demos_path,
            dir,
        }
    }
}

fn load(path: &Path) -> GenerativePolicy {
    GenerativePolicy::load(path).unwrap()
}

// ---------------------------------------------------------------- criterion 1

const STEP: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

/// Fourth-order central difference of `f` at 0 along one coordinate.
fn central(mut f: impl FnMut(f64) -> f64) -> f64 {
    (-f(2.0 * STEP) + 8.0 * f(STEP) - 8.0 * f(-STEP) + f(-2.0 * STEP)) / (12.0 * STEP)
}

fn objective(net: &Mlp, x: &dsrl_numerics::Tensor, up: &dsrl_numerics::Tensor) -> f64 {
    let y = net.forward(x).unwrap();
    y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
}

/// Worst relative error of parameter and input gradients of `net` against
/// central differences, after perturbing every parameter.
fn mlp_worst_error(net: &Mlp, seed: u64) -> f64 {
    use dsrl_numerics::Tensor;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = net.clone();
    for p in net.params_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let (din, dout, batch) = (net.input_width(), net.output_width(), 3);
    let x = Tensor::matrix(batch, din, (0..batch * din).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
    let up = Tensor::matrix(batch, dout, (0..batch * dout).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let (_, cache) = net.forward_cached(&x).unwrap();
    let grads = net.backward(&cache, &up).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..net.num_params() {
        let orig = net.params()[i];
        let num = central(|h| {
            net.params_mut()[i] = orig + h;
            objective(&net, &x, &up)
        });
        net.params_mut()[i] = orig;
        worst = worst.max(rel_err(grads.params[i], num));
    }
    let mut xs = x.clone();
    for i in 0..xs.data().len() {
        let orig = xs.data()[i];
        let num = central(|h| {
            xs.data_mut()[i] = orig + h;
            objective(&net, &xs, &up)
        });
        xs.data_mut()[i] = orig;
        worst = worst.max(rel_err(grads.input.data()[i], num));
    }
    worst
}

fn small_agent_config(activation: Activation, layer_norm: bool) -> AgentConfig {
    let mut cfg = AgentConfig::new(3, 4, 4);
    cfg.hidden = vec![16, 16];
    cfg.activation = activation;
    cfg.layer_norm = layer_norm;
    cfg
}

/// Reparameterized actor loss `mean(alpha log pi(w|s) - g . w)` with the
/// sampling noise held fixed by reseeding.
fn actor_worst_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent = NaAgent::new(small_agent_config(Activation::Tanh, true), &mut rng).unwrap();
    let mut actor = agent.actor().clone();
    for p in actor.net_mut().params_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let n = 3;
    let states: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g: Vec<f64> = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let alpha = 0.3;
    let draw = seed.wrapping_mul(31) + 7;
    let loss = |a: &dsrl_agents::SquashedGaussianActor| {
        let s = a.sample(&states, n, &mut ChaCha8Rng::seed_from_u64(draw)).unwrap();
        (0..n)
            .map(|r| alpha * s.logp[r] - (0..4).map(|i| g[r * 4 + i] * s.w[r * 4 + i]).sum::<f64>())
            .sum::<f64>()
            / n as f64
    };
    let sample = actor.sample(&states, n, &mut ChaCha8Rng::seed_from_u64(draw)).unwrap();
    let grads = actor.gradient(&sample, &g, alpha).unwrap();
    let mut worst: f64 = 0.0;
    for p in 0..actor.net().num_params() {
        let orig = actor.net().params()[p];
        let num = central(|h| {
            actor.net_mut().params_mut()[p] = orig + h;
            loss(&actor)
        });
        actor.net_mut().params_mut()[p] = orig;
        worst = worst.max(rel_err(grads[p], num));
    }
    worst
}

/// dQ/dx of the aggregated critic ensemble (min and mean).
fn critic_input_worst_error(seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, agg) in ["min", "mean"].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 2 + k as u64);
        let mut cfg = small_agent_config(Activation::Gelu, true);
        cfg.num_critics = 3;
        cfg.aggregation = if agg == "min" {
            dsrl_agents::Aggregation::Min
        } else {
            dsrl_agents::Aggregation::Mean
        };
        let agent = SacAgent::new(cfg, &mut rng).unwrap();
        let critics = agent.critics();
        let n = 3;
        let s: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..n * 4).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (_, g) = critics.input_gradient(&s, &x, n).unwrap();
        for i in 0..x.len() {
            let r = i / 4;
            let num = central(|h| {
                let mut xh = x.clone();
                xh[i] += h;
                critics.q(&s, &xh, n).unwrap()[r]
            });
            worst = worst.max(rel_err(g[i], num));
        }
    }
    worst
}

fn criterion_1(_: &Fixtures) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut dcfg = DiffusionConfig::new(2, &[-0.2, -0.2], &[0.2, 0.2]);
    dcfg.hidden = vec![16, 16];
    dcfg.chunk_len = 2;
    let denoiser = DiffusionPolicy::new(&dcfg, &mut rng).unwrap().denoiser().clone();
    let mut fcfg = FlowConfig::new(2, &[-0.2, -0.2], &[0.2, 0.2]);
    fcfg.hidden = vec![16, 16];
    fcfg.chunk_len = 2;
    let velocity = FlowPolicy::new(&fcfg, &mut rng).unwrap().velocity().clone();
    let agent = NaAgent::new(small_agent_config(Activation::Gelu, true), &mut rng).unwrap();
    let plain = NaAgent::new(small_agent_config(Activation::Tanh, false), &mut rng).unwrap();
    let classes: Vec<(&str, Mlp)> = vec![
        ("denoiser", denoiser),
        ("flow velocity", velocity),
        ("actor", agent.actor().net().clone()),
        ("action critic", agent.qa().nets()[0].clone()),
        ("latent critic", agent.qw().nets()[0].clone()),
        ("tanh critic without norm", plain.qa().nets()[0].clone()),
    ];
    let start = Instant::now();
    let mut worst_overall: f64 = 0.0;
    for (name, net) in &classes {
        for seed in 0..20 {
            let e = mlp_worst_error(net, seed);
            if e >= 1e-6 {
                return Err(format!("{name} seed {seed}: relative error {e:e}"));
            }
            worst_overall = worst_overall.max(e);
        }
    }
    for seed in 0..20 {
        let e = actor_worst_error(seed);
        if e >= 1e-6 {
            return Err(format!("actor loss seed {seed}: relative error {e:e}"));
        }
        worst_overall = worst_overall.max(e);
        let e = critic_input_worst_error(seed);
        if e >= 1e-6 {
            return Err(format!("critic input gradient seed {seed}: relative error {e:e}"));
        }
        worst_overall = worst_overall.max(e);
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("took {secs:.1}s"));
    }
    Ok(format!(
        "{} network classes + actor loss + critic input gradient, 20 seeds each, worst relative error {worst_overall:.2e}, {secs:.1}s",
        classes.len()
    ))
}

// ---------------------------------------------------------------- criterion 2

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn determinism(policy: &GenerativePolicy, path: &Path, dir: &Path) -> Result<(), String> {
    let n = 1000;
    let (sd, ld) = (policy.state_dim(), policy.latent_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let states: Vec<f64> = (0..n * sd).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise: Vec<f64> = (0..n * ld).map(|_| rng.sample(StandardNormal)).collect();
    let reference = bits(&policy.decode_batch(&states, &noise, n).map_err(|e| e.to_string())?);
    let one_by_one: Vec<f64> = (0..n)
        .flat_map(|i| {
            policy
                .decode(&states[i * sd..(i + 1) * sd], &noise[i * ld..(i + 1) * ld])
                .unwrap()
        })
        .collect();
    if bits(&one_by_one) != reference {
        return Err("row-by-row decoding differs from the batch".into());
    }
    if bits(&policy.decode_batch(&states, &noise, n).unwrap()) != reference {
        return Err("repeated batch call differs".into());
    }
    let threaded: Vec<f64> = thread::scope(|scope| {
        let handles: Vec<_> = (0..4)
            .map(|t| {
                let (states, noise) = (&states, &noise);
                scope.spawn(move || {
                    let rows = t * 250..(t + 1) * 250;
                    policy
                        .decode_batch(&states[rows.start * sd..rows.end * sd], &noise[rows.start * ld..rows.end * ld], 250)
                        .unwrap()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    if bits(&threaded) != reference {
        return Err("threaded decoding differs".into());
    }
    let copy = dir.join("roundtrip.ckpt");
    policy.save(&copy).map_err(|e| e.to_string())?;
    let reloaded = GenerativePolicy::load(&copy).map_err(|e| e.to_string())?;
    if bits(&reloaded.decode_batch(&states, &noise, n).unwrap()) != reference {
        return Err("decoding after save/load differs".into());
    }
    let original = GenerativePolicy::load(path).map_err(|e| e.to_string())?;
    if bits(&original.decode_batch(&states, &noise, n).unwrap()) != reference {
        return Err("decoding after reload of the original checkpoint differs".into());
    }
    Ok(())
}

fn criterion_2(f: &Fixtures) -> Outcome {
    let start = Instant::now();
    determinism(&load(&f.bc1), &f.bc1, f.dir.path()).map_err(|e| format!("DDIM: {e}"))?;
    determinism(&load(&f.flow), &f.flow, f.dir.path()).map_err(|e| format!("flow: {e}"))?;
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("took {secs:.1}s"));
    }
    Ok(format!(
        "1000 (s, w) pairs, DDIM and flow: batch, row-wise, repeated, 4 threads, save/load all bit-identical, {secs:.1}s"
    ))
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3(f: &Fixtures) -> Outcome {
    let start = Instant::now();
    let policy = load(&f.bc1);
    let mut env = PointMassEnv::new(PointMassConfig::default(), 99);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    let mut states = Vec::with_capacity(2 * n);
    for _ in 0..n {
        states.extend(env.reset());
    }
    let noise: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
    let actions = policy.decode_batch(&states, &noise, n).map_err(|e| e.to_string())?;
    let right = (0..n).filter(|&i| actions[2 * i] > 0.0).count() as f64 / n as f64;
    let base = evaluate_policy(None, &policy, &EnvConfig::point_mass(), 400, 7).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64() + 0.0;
    let detail = format!(
        "right-mode share {right:.3} over 10^4 DDIM samples, base success {:.3} over 400 episodes",
        base.success_rate
    );
    if (right - 0.5).abs() > 0.05 || (base.success_rate - 0.5).abs() > 0.07 || secs >= 600.0 {
        return Err(detail);
    }
    Ok(detail)
}

// ------------------------------------------------------------ steering runs

fn steer_config(algorithm: Algorithm, policy: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(algorithm, EnvConfig::point_mass());
    cfg.seed = seed;
    cfg.policy.checkpoint = Some(policy.to_path_buf());
    cfg.steer.batch_size = 128;
    cfg.steer.parallel_envs = 1;
    cfg.steer.eval_episodes = 100;
    cfg.agent.hidden = vec![64, 64];
    cfg.agent.activation = "tanh".into();
    cfg.agent.layer_norm = false;
    cfg.agent.learn_alpha = false;
    cfg.agent.init_alpha = 1e-3;
    cfg
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

fn show(steps: u64) -> String {
    if steps == u64::MAX {
        "never".into()
    } else {
        steps.to_string()
    }
}

fn sac_online(f: &Fixtures, seed: u64) -> Result<RunResult, String> {
    let mut cfg = steer_config(Algorithm::Sac, &f.bc1, seed);
    cfg.steer.utd = 2;
    cfg.steer.qw_steps = 1;
    cfg.steer.initial_steps = 500;
    cfg.steer.online_steps = 6000;
    cfg.steer.eval_interval = 200;
    run(&cfg).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4(f: &Fixtures) -> Outcome {
    let policy = load(&f.bc1);
    let base = evaluate_policy(None, &policy, &EnvConfig::point_mass(), 100, dsrl_harness::eval_seed(1))
        .map_err(|e| e.to_string())?
        .success_rate;
    let mut finals = Vec::new();
    let mut max_steps = 0;
    for seed in SEEDS {
        let r = sac_online(f, seed)?;
        finals.push(final_window_success(&r.evals, 0.1).unwrap_or(0.0));
        max_steps = max_steps.max(r.env_steps);
    }
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let detail = format!(
        "base {base:.2}, final-window success per seed {finals:.3?} (mean {mean:.3}) within {max_steps} env steps"
    );
    if finals.iter().all(|&s| s >= 0.9) && max_steps <= 30_000 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5(f: &Fixtures) -> Outcome {
    let mut sac = Vec::new();
    let mut na = Vec::new();
    for seed in SEEDS {
        for (alg, out) in [(Algorithm::Sac, &mut sac), (Algorithm::Na, &mut na)] {
            let mut cfg = steer_config(alg, &f.bc8, seed);
            cfg.steer.utd = 10;
            cfg.steer.qw_steps = 10;
            cfg.steer.initial_steps = 16;
            cfg.steer.online_steps = 200;
            cfg.steer.eval_interval = 8;
            let r = run(&cfg).map_err(|e| e.to_string())?;
            out.push(steps_to_sustain(&r.evals, 0.9, 3).unwrap_or(u64::MAX));
        }
    }
    let (ms, mn) = (median(sac.clone()), median(na.clone()));
    let detail = format!(
        "env steps to sustain 90% (3 consecutive evals), chunk 8: DSRL-SAC {:?} median {}, DSRL-NA {:?} median {}",
        sac.iter().map(|&s| show(s)).collect::<Vec<_>>(),
        show(ms),
        na.iter().map(|&s| show(s)).collect::<Vec<_>>(),
        show(mn)
    );
    if mn <= ms && mn != u64::MAX {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6(f: &Fixtures) -> Outcome {
    let policy = load(&f.bc1);
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in SEEDS {
        let mut cfg = steer_config(Algorithm::Na, &f.bc1, seed);
        cfg.steer.utd = 2;
        cfg.steer.qw_steps = 2;
        cfg.steer.offline_steps = 1500;
        cfg.steer.eval_interval = 500;
        cfg.steer.dataset = Some(f.demos.clone());
        let r = run(&cfg).map_err(|e| e.to_string())?;
        let base = evaluate_policy(None, &policy, &cfg.env, cfg.steer.eval_episodes, dsrl_harness::eval_seed(seed))
            .map_err(|e| e.to_string())?
            .success_rate;
        let steered = r.evals.last().map_or(0.0, |e| e.result.success_rate);
        let audit = r.audit.ok_or("audit was not enabled")?;
        ok &= r.env_steps == 0 && steered >= 0.85 && steered - base >= 0.30 && audit.violations == 0;
        lines.push(format!(
            "seed {seed}: base {base:.2} -> {steered:.2}, Q^A queries {} dataset + {} decoded, {} violations",
            audit.dataset_queries, audit.decoded_queries, audit.violations
        ));
    }
    let detail = lines.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7(f: &Fixtures) -> Outcome {
    let mut online = Vec::new();
    let mut seeded = Vec::new();
    let mut strict = true;
    for seed in SEEDS {
        let mut cfg = steer_config(Algorithm::Na, &f.bc1, seed);
        cfg.steer.utd = 10;
        cfg.steer.qw_steps = 10;
        cfg.steer.online_steps = 300;
        cfg.steer.eval_interval = 20;
        cfg.steer.eval_episodes = 50;
        cfg.steer.initial_steps = 100;
        let on = run(&cfg).map_err(|e| e.to_string())?;
        cfg.steer.initial_steps = 0;
        cfg.steer.offline_steps = 200;
        cfg.steer.dataset = Some(f.demos.clone());
        let off2on = run(&cfg).map_err(|e| e.to_string())?;
        let a = steps_to_sustain(&on.evals, 0.9, 1).unwrap_or(u64::MAX);
        let b = steps_to_sustain(&off2on.evals, 0.9, 1).unwrap_or(u64::MAX);
        strict &= b < a;
        online.push(a);
        seeded.push(b);
    }
    let (ma, mb) = (median(online.clone()), median(seeded.clone()));
    let detail = format!(
        "env steps to 90%: online {:?} median {}, seeded with 200 demos {:?} median {}",
        online.iter().map(|&s| show(s)).collect::<Vec<_>>(),
        show(ma),
        seeded.iter().map(|&s| show(s)).collect::<Vec<_>>(),
        show(mb)
    );
    if mb < ma && strict {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criterion 8

const B: f64 = 1.5;
const UPDATES: usize = 15_000;

fn grid() -> Vec<f64> {
    vec![-1.5, -1.25, -1.0, -0.75, -0.25, 0.0, 0.25, 0.75, 1.0, 1.25, 1.5]
}

fn chain_config(n_states: usize, width: usize) -> AgentConfig {
    let mut cfg = AgentConfig::new(n_states, 1, 1);
    cfg.half_width = B;
    cfg.hidden = vec![width, width];
    cfg.activation = Activation::Tanh;
    cfg.layer_norm = false;
    cfg.actor_lr = 1e-3;
    cfg.critic_lr = 1e-3;
    cfg.tau = 0.02;
    cfg.learn_alpha = false;
    cfg.init_alpha = 0.0;
    cfg
}

fn enumerated(chain: &ChainMdp, decoder: &ThresholdDecoder, with_latents: bool) -> ReplayBuffer {
    let n = chain.num_states();
    let mut buf = ReplayBuffer::new(100_000, n, 1, 1);
    for s in (0..n).filter(|&s| !chain.is_terminal(s)) {
        let rows: Vec<(Option<f64>, usize)> = if with_latents {
            grid().into_iter().map(|w| (Some(w), decoder.bin(w))).collect()
        } else {
            (0..chain.num_actions()).map(|a| (None, a)).collect()
        };
        for (w, a) in rows {
            let (next, _) = chain.outcomes(s, a)[0];
            buf.push(Record {
                state: chain.one_hot(s),
                action: vec![chain.effects()[a]],
                latent: w.map(|w| vec![w]),
                reward: chain.reward(s, a),
                next_state: chain.one_hot(next),
                done: chain.is_terminal(next),
                discount: chain.gamma(),
                origin: Origin::Offline,
            })
            .unwrap();
        }
    }
    buf
}

fn annealed(step: usize) -> Option<Temperature> {
    step.is_multiple_of(250).then(|| Temperature::fixed(0.2 * (1.0 - step as f64 / (0.6 * UPDATES as f64)).max(0.0)))
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

/// Optimal latents by brute force: every grid latent whose decoded action
/// attains the value-iteration optimum.
fn optimal_latents(chain: &ChainMdp, decoder: &ThresholdDecoder, s: usize) -> Vec<f64> {
    let vi = chain.value_iteration(1e-12, 100_000);
    grid()
        .into_iter()
        .filter(|&w| (vi.q[s][decoder.bin(w)] - vi.v[s]).abs() < 1e-9)
        .collect()
}

fn criterion_8(_: &Fixtures) -> Outcome {
    let chain = ChainMdp::ladder(5, 0.1, 0.9);
    let vi = chain.value_iteration(1e-12, 100_000);
    let decoder = ThresholdDecoder::for_chain(&chain, B);
    let live: Vec<usize> = (0..5).filter(|&s| !chain.is_terminal(s)).collect();
    let g = grid();

    // DSRL-NA: Q^A against value iteration, steered greedy latent against brute force
    let buf = enumerated(&chain, &decoder, false);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut na = NaAgent::new(chain_config(5, 32), &mut rng).unwrap();
    for i in 0..UPDATES {
        if let Some(t) = annealed(i) {
            na.set_temperature(t);
        }
        let batch = buf.sample(64, &mut rng).unwrap();
        na.update(&batch, &decoder, i % 2 == 0, &mut rng).unwrap();
    }
    let mut qa_err: f64 = 0.0;
    for &s in &live {
        let states: Vec<f64> = (0..3).flat_map(|_| chain.one_hot(s)).collect();
        let qa = na.qa().q(&states, chain.effects(), 3).unwrap();
        for a in 0..3 {
            qa_err = qa_err.max((qa[a] - vi.q[s][a]).abs());
        }
        let states: Vec<f64> = (0..g.len()).flat_map(|_| chain.one_hot(s)).collect();
        let qw = na.qw().q(&states, &g, g.len()).unwrap();
        let best = optimal_latents(&chain, &decoder, s);
        if !best.contains(&g[argmax(&qw)]) {
            return Err(format!("NA state {s}: greedy latent {} not in brute-force optimum {best:?}", g[argmax(&qw)]));
        }
    }

    // DSRL-SAC on the latent grid directly
    let buf = enumerated(&chain, &decoder, true);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut sac = SacAgent::new(chain_config(5, 64), &mut rng).unwrap();
    for i in 0..UPDATES {
        if let Some(t) = annealed(i) {
            sac.set_temperature(t);
        }
        let batch = buf.sample(64, &mut rng).unwrap();
        sac.update(&batch, &mut rng).unwrap();
    }
    let mut qw_err: f64 = 0.0;
    for &s in &live {
        let states: Vec<f64> = (0..g.len()).flat_map(|_| chain.one_hot(s)).collect();
        let q = sac.critics().q(&states, &g, g.len()).unwrap();
        for (k, &w) in g.iter().enumerate() {
            qw_err = qw_err.max((q[k] - vi.q[s][decoder.bin(w)]).abs());
        }
        let best = optimal_latents(&chain, &decoder, s);
        if !best.contains(&g[argmax(&q)]) {
            return Err(format!("SAC state {s}: greedy latent {} not in brute-force optimum {best:?}", g[argmax(&q)]));
        }
    }
    let detail = format!(
        "5-state ladder: max |Q^A - Q*| {qa_err:.2e} (NA); greedy steered latents of NA and SAC optimal in every state (SAC latent-critic max error {qw_err:.2e})"
    );
    if qa_err < 1e-2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criterion 9

fn protocol_conformance(server: &Server) -> Result<(), String> {
    let stream = TcpStream::connect(server.local_addr()).map_err(|e| e.to_string())?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    let mut read = || -> Result<Response, String> {
        let mut line = String::new();
        reader.read_line(&mut line).map_err(|e| e.to_string())?;
        serde_json::from_str(&line).map_err(|e| e.to_string())
    };
    writer.write_all(b"{\"id\": 1, \"state\": [0, 0], \"noise\": nope}\n").unwrap();
    let r = read()?;
    if r.error.is_none() || r.action.is_some() {
        return Err(format!("malformed request answered with {r:?}"));
    }
    // pipelined requests come back in order on the surviving connection
    let mut batch = String::new();
    for id in 100..150 {
        batch.push_str(&format!("{{\"id\": {id}, \"state\": [0.1, 0.0], \"noise\": [0.5, -0.5]}}\n"));
    }
    writer.write_all(batch.as_bytes()).unwrap();
    for id in 100..150 {
        let r = read()?;
        if r.id != Some(id) || r.action.is_none() {
            return Err(format!("expected an action for id {id}, got {r:?}"));
        }
    }
    // a silent server times the client out
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hold = thread::spawn(move || {
        let (conn, _) = listener.accept().unwrap();
        thread::sleep(Duration::from_millis(800));
        drop(conn);
    });
    let mut cfg = ClientConfig::new(2, 2, 1);
    cfg.timeout = Duration::from_millis(200);
    let client = RemoteClient::connect(addr, cfg).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let got = client.decode(&[0.0, 0.0], &[0.0, 0.0]);
    let waited = t.elapsed();
    hold.join().unwrap();
    if got != Err(QueryError::Timeout) || waited > Duration::from_millis(700) {
        return Err(format!("silent server gave {got:?} after {waited:?}"));
    }
    Ok(())
}

fn criterion_9(f: &Fixtures) -> Outcome {
    let local = load(&f.bc1);
    let server = Server::bind(Arc::new(local.clone()), "127.0.0.1:0").map_err(|e| e.to_string())?;
    let client = RemoteClient::connect(server.local_addr(), ClientConfig::new(2, 2, 1)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..100 {
        let s = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let w = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let (a, b) = (client.decode(&s, &w), local.decode(&s, &w));
        if a.as_ref().map(|v| bits(v)) != b.as_ref().map(|v| bits(v)) {
            return Err(format!("probe {i}: remote {a:?} vs local {b:?}"));
        }
    }
    protocol_conformance(&server)?;

    let mut cfg = steer_config(Algorithm::Sac, &f.bc1, 1);
    cfg.steer.utd = 2;
    cfg.steer.qw_steps = 1;
    cfg.steer.initial_steps = 500;
    cfg.steer.online_steps = 2000;
    cfg.steer.eval_interval = 500;
    let in_process = run(&cfg).map_err(|e| e.to_string())?;
    cfg.policy.checkpoint = None;
    cfg.policy.remote = Some(server.local_addr().to_string());
    let remote = run(&cfg).map_err(|e| e.to_string())?;
    let (a, b) = (
        in_process.evals.last().unwrap().result.success_rate,
        remote.evals.last().unwrap().result.success_rate,
    );
    let detail = format!(
        "100 probes bit-identical; malformed/ordering/timeout conformance ok; final success in-process {a:.2}, over the wire {b:.2} ({} requests served)",
        server.requests_served()
    );
    if (a - b).abs() <= 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// --------------------------------------------------------------- criterion 10

fn criterion_10(f: &Fixtures) -> Outcome {
    let policy = load(&f.bc8);
    let gamma = PointMassConfig::default().gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    let mut rewarded = 0;
    for k in 0..100u64 {
        let env = PointMassEnv::new(PointMassConfig::default(), 1000 + k);
        let mut replay = PointMassEnv::new(PointMassConfig::default(), 1000 + k);
        let mut mdp = LatentActionMdp::new(env, &policy, 2.5).map_err(|e| e.to_string())?;
        let c = mdp.chunk_len();
        let ad = replay.action_dim();
        mdp.reset();
        replay.reset();
        let (mut chunked, mut g) = (0.0, 1.0);
        let mut raw_rewards = Vec::new();
        loop {
            let w: Vec<f64> = (0..mdp.latent_dim()).map(|_| rng.sample(StandardNormal)).collect();
            let out = mdp.chunk_step(&w).map_err(|e| e.to_string())?;
            chunked += g * out.reward;
            g *= gamma.powi(out.raw_steps as i32);
            for j in 0..out.raw_steps {
                let step = replay.step(&out.action[j * ad..(j + 1) * ad]).map_err(|e| e.to_string())?;
                raw_rewards.push(step.reward);
            }
            if out.raw_steps < c && !out.done() {
                return Err("chunk ended early without the episode ending".into());
            }
            if out.done() {
                break;
            }
        }
        rewarded += usize::from(raw_rewards.iter().any(|&r| r != 0.0));
        worst = worst.max((chunked - discounted_sum(&raw_rewards, gamma)).abs());
    }
    let single: Vec<f64> = (0..32).map(|i| i as f64).collect();
    let broadcast = noise_broadcast(&single, 50);
    let tiled = broadcast.len() == 1600 && broadcast.chunks(32).all(|c| c == single.as_slice());
    let detail = format!(
        "100 chunk-8 rollouts ({rewarded} rewarded): max |chunked - raw| {worst:.1e}; noise broadcast 50x32 -> {}",
        broadcast.len()
    );
    if worst < 1e-9 && tiled {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ----------------------------------------------------------------------------

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    match (payload.downcast_ref::<String>(), payload.downcast_ref::<&str>()) {
        (Some(s), _) => s.clone(),
        (_, Some(s)) => s.to_string(),
        _ => "non-string payload".into(),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let fixtures = Fixtures::build();
    println!(
        "fixtures: 200 demos (p = 0.5), diffusion BC at chunk 1 and 8, flow BC ({:.1}s)",
        start.elapsed().as_secs_f64()
    );
    let criteria: [(&str, fn(&Fixtures) -> Outcome); 10] = [
        ("gradient suite", criterion_1),
        ("DDIM/flow determinism", criterion_2),
        ("BC fidelity", criterion_3),
        ("online steering", criterion_4),
        ("noise-aliasing benefit", criterion_5),
        ("offline steering", criterion_6),
        ("offline-to-online", criterion_7),
        ("tabular oracle", criterion_8),
        ("black-box endpoint", criterion_9),
        ("chunking algebra", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&fixtures)))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(p.as_ref()))));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}) [{secs:.1}s]", i + 1);
            }
        }
        let _ = std::io::stdout().flush();
    }
    println!("{} of 10 criteria passed in {:.0}s", 10 - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
