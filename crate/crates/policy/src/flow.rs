use dsrl_numerics::{Activation, Adam, AdamConfig, Mlp, MlpConfig, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffusion::regression_loss;
use crate::error::dim;
use crate::{sinusoidal_embedding, ActionScaling, BcBatch, PolicyError, Result, TIME_EMBED_DIM};

/// Flow time in `[0, 1]` is stretched by this factor before the sinusoidal
/// embedding so that its frequencies cover the unit interval.
const FLOW_TIME_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub chunk_len: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub normalize_actions: bool,
    pub euler_steps: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub layer_norm: bool,
    pub lr: f64,
}

impl FlowConfig {
    pub fn new(state_dim: usize, action_low: &[f64], action_high: &[f64]) -> Self {
        Self {
            state_dim,
            action_dim: action_low.len(),
            chunk_len: 1,
            action_low: action_low.to_vec(),
            action_high: action_high.to_vec(),
            normalize_actions: true,
            euler_steps: 10,
            hidden: vec![128, 128],
            activation: Activation::Gelu,
            layer_norm: false,
            lr: 1e-3,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.action_dim * self.chunk_len
    }

    fn net_widths(&self) -> (usize, usize) {
        (self.state_dim + self.latent_dim() + TIME_EMBED_DIM, self.latent_dim())
    }

    fn scaling(&self) -> ActionScaling {
        if self.normalize_actions {
            ActionScaling::normalized(&self.action_low, &self.action_high, self.chunk_len)
        } else {
            ActionScaling::identity(&self.action_low, &self.action_high, self.chunk_len)
        }
    }
}

/// Rectified-flow policy: `x_t = (1 - t) w + t a`, velocity target `a - w`.
#[derive(Debug, Clone)]
pub struct FlowPolicy {
    state_dim: usize,
    action_dim: usize,
    chunk_len: usize,
    velocity: Mlp,
    euler_steps: usize,
    scaling: ActionScaling,
    optimizer: Adam,
}

impl FlowPolicy {
    pub fn new<R: Rng + ?Sized>(config: &FlowConfig, rng: &mut R) -> Result<Self> {
        let (i, o) = config.net_widths();
        let net = Mlp::new(&MlpConfig::new(i, &config.hidden, o, config.activation, config.layer_norm), rng)?;
        Self::with_velocity(config, net)
    }

    pub fn with_velocity(config: &FlowConfig, velocity: Mlp) -> Result<Self> {
        if config.action_high.len() != config.action_dim {
            return Err(dim("action bounds", config.action_dim, config.action_high.len()));
        }
        Self::from_parts(
            config.state_dim,
            config.action_dim,
            config.chunk_len,
            velocity,
            config.euler_steps,
            config.scaling(),
            AdamConfig::with_lr(config.lr),
        )
    }

    pub fn from_parts(
        state_dim: usize,
        action_dim: usize,
        chunk_len: usize,
        velocity: Mlp,
        euler_steps: usize,
        scaling: ActionScaling,
        adam: AdamConfig,
    ) -> Result<Self> {
        let latent = action_dim * chunk_len;
        if euler_steps == 0 {
            return Err(PolicyError::Config("need at least one Euler step".into()));
        }
        if velocity.input_width() != state_dim + latent + TIME_EMBED_DIM {
            return Err(dim("velocity input", state_dim + latent + TIME_EMBED_DIM, velocity.input_width()));
        }
        if velocity.output_width() != latent {
            return Err(dim("velocity output", latent, velocity.output_width()));
        }
        if scaling.dim() != latent {
            return Err(dim("action scaling", latent, scaling.dim()));
        }
        let optimizer = Adam::new(velocity.num_params(), adam);
        Ok(Self {
            state_dim,
            action_dim,
            chunk_len,
            velocity,
            euler_steps,
            scaling,
            optimizer,
        })
    }

    /// The zero velocity field without normalization: decodes `w` to
    /// `clamp(w, low, high)`.
    pub fn identity(state_dim: usize, action_low: &[f64], action_high: &[f64], chunk_len: usize) -> Result<Self> {
        let mut c = FlowConfig::new(state_dim, action_low, action_high);
        c.chunk_len = chunk_len;
        c.normalize_actions = false;
        c.euler_steps = 1;
        let (i, o) = c.net_widths();
        let net = Mlp::zeros(&[i, o], Activation::Tanh, &[false])?;
        Self::with_velocity(&c, net)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn latent_dim(&self) -> usize {
        self.action_dim * self.chunk_len
    }

    pub fn euler_steps(&self) -> usize {
        self.euler_steps
    }

    pub fn velocity(&self) -> &Mlp {
        &self.velocity
    }

    pub fn velocity_mut(&mut self) -> &mut Mlp {
        &mut self.velocity
    }

    pub fn scaling(&self) -> &ActionScaling {
        &self.scaling
    }

    fn inputs(&self, states: &[f64], x: &[f64], times: &[f64]) -> Tensor {
        let (sd, ld) = (self.state_dim, self.latent_dim());
        let n = times.len();
        let width = sd + ld + TIME_EMBED_DIM;
        let mut data = Vec::with_capacity(n * width);
        for i in 0..n {
            data.extend_from_slice(&states[i * sd..(i + 1) * sd]);
            data.extend_from_slice(&x[i * ld..(i + 1) * ld]);
            data.extend_from_slice(&sinusoidal_embedding(times[i] * FLOW_TIME_SCALE));
        }
        Tensor::matrix(n, width, data).expect("consistent input shape")
    }

    fn check_batch(&self, batch: &BcBatch) -> Result<()> {
        if batch.len == 0 {
            return Err(PolicyError::EmptyBatch);
        }
        if batch.states.len() != batch.len * self.state_dim {
            return Err(dim("state batch", batch.len * self.state_dim, batch.states.len()));
        }
        if batch.actions.len() != batch.len * self.latent_dim() {
            return Err(dim("action batch", batch.len * self.latent_dim(), batch.actions.len()));
        }
        Ok(())
    }

    fn loss_and_grad<R: Rng + ?Sized>(&self, batch: &BcBatch, rng: &mut R, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        self.check_batch(batch)?;
        let (n, ld) = (batch.len, self.latent_dim());
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut x = vec![0.0; n * ld];
        let mut target = vec![0.0; n * ld];
        let mut a = vec![0.0; ld];
        for i in 0..n {
            self.scaling.to_model(&batch.actions[i * ld..(i + 1) * ld], &mut a);
            let t = times[i];
            for j in 0..ld {
                let w: f64 = rng.sample(StandardNormal);
                x[i * ld + j] = (1.0 - t) * w + t * a[j];
                target[i * ld + j] = a[j] - w;
            }
        }
        let (pred, cache) = self.velocity.forward_cached(&self.inputs(&batch.states, &x, &times))?;
        let (loss, up) = regression_loss(pred.data(), &target, n);
        if !want_grad {
            return Ok((loss, None));
        }
        let up = Tensor::matrix(n, ld, up)?;
        Ok((loss, Some(self.velocity.backward(&cache, &up)?.params)))
    }

    pub fn bc_loss<R: Rng + ?Sized>(&self, batch: &BcBatch, rng: &mut R) -> Result<f64> {
        Ok(self.loss_and_grad(batch, rng, false)?.0)
    }

    /// One Adam step on the flow-matching objective; returns the pre-update loss.
    pub fn bc_train_step<R: Rng + ?Sized>(&mut self, batch: &BcBatch, rng: &mut R) -> Result<f64> {
        let (loss, grads) = self.loss_and_grad(batch, rng, true)?;
        self.optimizer.step(self.velocity.params_mut(), &grads.expect("gradient requested"))?;
        Ok(loss)
    }

    /// `K` Euler steps from `x = w`, then clamp.
    pub fn sample_batch(&self, states: &[f64], noises: &[f64], n: usize) -> Result<Vec<f64>> {
        let (sd, ld) = (self.state_dim, self.latent_dim());
        if states.len() != n * sd {
            return Err(dim("state batch", n * sd, states.len()));
        }
        if noises.len() != n * ld {
            return Err(dim("noise batch", n * ld, noises.len()));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let h = 1.0 / self.euler_steps as f64;
        let mut x = noises.to_vec();
        let mut times = vec![0.0; n];
        for k in 0..self.euler_steps {
            times.fill(k as f64 * h);
            let v = self.velocity.forward(&self.inputs(states, &x, &times))?;
            for (xi, vi) in x.iter_mut().zip(v.data()) {
                *xi += h * vi;
            }
        }
        let mut out = vec![0.0; n * ld];
        for i in 0..n {
            self.scaling.to_env(&x[i * ld..(i + 1) * ld], &mut out[i * ld..(i + 1) * ld]);
        }
        Ok(out)
    }

    pub fn sample(&self, state: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        if noise.len() != self.latent_dim() {
            return Err(dim("noise", self.latent_dim(), noise.len()));
        }
        self.sample_batch(state, noise, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_flow_clamps() {
        let p = FlowPolicy::identity(1, &[-1.0, -1.0], &[1.0, 1.0], 1).unwrap();
        assert_eq!(p.sample(&[0.0], &[0.3, -2.0]).unwrap(), vec![0.3, -1.0]);
    }

    #[test]
    fn constant_velocity_adds_constant() {
        let mut c = FlowConfig::new(1, &[-1.0, -1.0], &[1.0, 1.0]);
        c.normalize_actions = false;
        c.euler_steps = 7;
        let mut net = Mlp::zeros(&[1 + 2 + TIME_EMBED_DIM, 2], Activation::Tanh, &[false]).unwrap();
        net.bias_mut(0).copy_from_slice(&[0.25, -0.5]);
        let p = FlowPolicy::with_velocity(&c, net).unwrap();
        let a = p.sample(&[0.9], &[0.1, 0.2]).unwrap();
        assert!((a[0] - 0.35).abs() < 1e-14 && (a[1] + 0.3).abs() < 1e-14);
    }

    #[test]
    fn zero_velocity_loss_matches_expectation() {
        // a = 0.5 componentwise: E||a - w||^2 = 2 * (0.25 + 1)
        let c = FlowConfig {
            normalize_actions: false,
            ..FlowConfig::new(1, &[-1.0, -1.0], &[1.0, 1.0])
        };
        let net = Mlp::zeros(&[1 + 2 + TIME_EMBED_DIM, 2], Activation::Tanh, &[false]).unwrap();
        let p = FlowPolicy::with_velocity(&c, net).unwrap();
        let n = 100_000;
        let batch = BcBatch::new(vec![0.0; n], vec![0.5; 2 * n], n);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let loss = p.bc_loss(&batch, &mut rng).unwrap();
        assert!((loss - 2.5).abs() < 0.05, "{loss}");
    }

    #[test]
    fn exact_velocity_has_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, w): (Vec<f64>, Vec<f64>) = (0..6).map(|_| (rng.random_range(-1.0..1.0), rng.sample::<f64, _>(StandardNormal))).unzip();
        let target: Vec<f64> = a.iter().zip(&w).map(|(a, w)| a - w).collect();
        let (loss, up) = regression_loss(&target, &target, 3);
        assert_eq!(loss, 0.0);
        assert!(up.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn rejects_wrong_dims() {
        let p = FlowPolicy::identity(1, &[-1.0], &[1.0], 1).unwrap();
        assert!(p.sample(&[0.0], &[0.0, 0.0]).is_err());
        let mut q = p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(q.bc_train_step(&BcBatch::new(vec![], vec![], 0), &mut rng).is_err());
    }
}
