//! Behavioral cloning on a two-mode target: actions are `(+m, +m)` or
//! `(-m, -m)` chunks with equal probability, independent of the state.

use dsrl_latent::PolicyMap;
use dsrl_numerics::Activation;
use dsrl_policy::{BcBatch, DiffusionConfig, DiffusionPolicy, FlowConfig, FlowPolicy, GenerativePolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const MODE: f64 = 0.5;
const LOW: [f64; 1] = [-1.0];
const HIGH: [f64; 1] = [1.0];

fn batch(rng: &mut ChaCha8Rng, n: usize, chunk_len: usize) -> BcBatch {
    let mut states = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n * chunk_len);
    for _ in 0..n {
        states.push(rng.random_range(-0.1..0.1));
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for _ in 0..chunk_len {
            actions.push(sign * MODE + 0.01 * rng.sample::<f64, _>(StandardNormal));
        }
    }
    BcBatch::new(states, actions, n)
}

fn diffusion(chunk_len: usize) -> GenerativePolicy {
    let mut c = DiffusionConfig::new(1, &LOW, &HIGH);
    c.chunk_len = chunk_len;
    c.hidden = vec![64, 64];
    c.activation = Activation::Gelu;
    c.lr = 2e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p = DiffusionPolicy::new(&c, &mut rng).unwrap();
    for _ in 0..5000 {
        let b = batch(&mut rng, 128, chunk_len);
        p.bc_train_step(&b, &mut rng).unwrap();
    }
    p.into()
}

fn flow(chunk_len: usize) -> GenerativePolicy {
    let mut c = FlowConfig::new(1, &LOW, &HIGH);
    c.chunk_len = chunk_len;
    c.hidden = vec![64, 64];
    c.lr = 2e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut p = FlowPolicy::new(&c, &mut rng).unwrap();
    for _ in 0..5000 {
        let b = batch(&mut rng, 128, chunk_len);
        p.bc_train_step(&b, &mut rng).unwrap();
    }
    p.into()
}

struct Shares {
    up: f64,
    down: f64,
    /// Chunks with one action clearly in each mode.
    mixed: f64,
}

fn mode_shares(policy: &GenerativePolicy, n: usize) -> Shares {
    let c = policy.chunk_len();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let states: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();
    let noise: Vec<f64> = (0..n * c).map(|_| rng.sample(StandardNormal)).collect();
    let out = policy.decode_batch(&states, &noise, n).unwrap();
    let (mut up, mut down, mut mixed) = (0, 0, 0);
    for chunk in out.chunks_exact(c) {
        if chunk.iter().all(|a| (a - MODE).abs() < 0.2) {
            up += 1;
        } else if chunk.iter().all(|a| (a + MODE).abs() < 0.2) {
            down += 1;
        }
        if chunk.iter().any(|&a| a > 0.3) && chunk.iter().any(|&a| a < -0.3) {
            mixed += 1;
        }
    }
    let n = n as f64;
    Shares {
        up: up as f64 / n,
        down: down as f64 / n,
        mixed: mixed as f64 / n,
    }
}

fn check_bimodal(name: &str, policy: &GenerativePolicy) {
    let Shares { up, down, mixed } = mode_shares(policy, 2000);
    assert!(up + down > 0.8, "{name}: only {} of samples near a mode", up + down);
    let balance = up / (up + down);
    assert!((0.35..=0.65).contains(&balance), "{name}: upper mode takes {balance} of the moded samples");
    assert!(mixed < 0.01, "{name}: {mixed} of chunks straddle both modes");
}

#[test]
fn diffusion_keeps_both_modes() {
    check_bimodal("diffusion", &diffusion(1));
}

#[test]
fn flow_keeps_both_modes() {
    check_bimodal("flow", &flow(1));
}

#[test]
fn chunked_samples_commit_to_one_mode() {
    check_bimodal("diffusion chunk 3", &diffusion(3));
    check_bimodal("flow chunk 3", &flow(3));
}

#[test]
fn trained_policy_survives_a_checkpoint_file() {
    let dir = tempfile::tempdir().unwrap();
    for (i, policy) in [diffusion(2), flow(2)].into_iter().enumerate() {
        let path = dir.path().join(format!("p{i}.ckpt"));
        policy.save(&path).unwrap();
        let loaded = GenerativePolicy::load(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let s = [rng.random_range(-0.1..0.1)];
            let w: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            assert_eq!(policy.decode(&s, &w).unwrap(), loaded.decode(&s, &w).unwrap());
        }
    }
}

