use dsrl_numerics::{Activation, Adam, AdamConfig, Mlp, MlpConfig, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::dim;
use crate::schedule::{ddim_timesteps, forward_with};
use crate::{sinusoidal_embedding, ActionScaling, BcBatch, NoiseSchedule, PolicyError, Result, TIME_EMBED_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub chunk_len: usize,
    /// Per-step action bounds.
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub normalize_actions: bool,
    pub train_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub inference_steps: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub layer_norm: bool,
    pub lr: f64,
}

impl DiffusionConfig {
    pub fn new(state_dim: usize, action_low: &[f64], action_high: &[f64]) -> Self {
        Self {
            state_dim,
            action_dim: action_low.len(),
            chunk_len: 1,
            action_low: action_low.to_vec(),
            action_high: action_high.to_vec(),
            normalize_actions: true,
            train_steps: 100,
            beta_min: 1e-4,
            beta_max: 0.1,
            inference_steps: 8,
            hidden: vec![128, 128],
            activation: Activation::Gelu,
            layer_norm: false,
            lr: 1e-3,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.action_dim * self.chunk_len
    }

    fn denoiser_config(&self) -> MlpConfig {
        MlpConfig::new(
            self.state_dim + self.latent_dim() + TIME_EMBED_DIM,
            &self.hidden,
            self.latent_dim(),
            self.activation,
            self.layer_norm,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 || self.chunk_len == 0 {
            return Err(PolicyError::Config("dimensions must be positive".into()));
        }
        if self.action_high.len() != self.action_dim {
            return Err(dim("action bounds", self.action_dim, self.action_high.len()));
        }
        if self.action_low.iter().zip(&self.action_high).any(|(l, h)| !(l < h)) {
            return Err(PolicyError::Config("action low must be below high".into()));
        }
        Ok(())
    }
}

/// Batch mean of squared L2 errors and its gradient w.r.t. `pred`.
pub(crate) fn regression_loss(pred: &[f64], target: &[f64], n: usize) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, y) in pred.iter().zip(target) {
        let d = p - y;
        loss += d * d;
        grad.push(2.0 * d / n as f64);
    }
    (loss / n as f64, grad)
}

/// Epsilon-prediction diffusion policy over action chunks.
#[derive(Debug, Clone)]
pub struct DiffusionPolicy {
    state_dim: usize,
    action_dim: usize,
    chunk_len: usize,
    denoiser: Mlp,
    schedule: NoiseSchedule,
    timesteps: Vec<usize>,
    scaling: ActionScaling,
    optimizer: Adam,
}

struct NoiseDraws {
    steps: Vec<usize>,
    eps: Vec<f64>,
}

impl DiffusionPolicy {
    pub fn new<R: Rng + ?Sized>(config: &DiffusionConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let denoiser = Mlp::new(&config.denoiser_config(), rng)?;
        Self::with_denoiser(config, denoiser)
    }

    pub fn with_denoiser(config: &DiffusionConfig, denoiser: Mlp) -> Result<Self> {
        config.validate()?;
        let schedule = NoiseSchedule::linear(config.train_steps, config.beta_min, config.beta_max)?;
        let timesteps = ddim_timesteps(config.train_steps, config.inference_steps)?;
        let scaling = if config.normalize_actions {
            ActionScaling::normalized(&config.action_low, &config.action_high, config.chunk_len)
        } else {
            ActionScaling::identity(&config.action_low, &config.action_high, config.chunk_len)
        };
        Self::from_parts(
            config.state_dim,
            config.action_dim,
            config.chunk_len,
            denoiser,
            schedule,
            timesteps,
            scaling,
            AdamConfig::with_lr(config.lr),
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        state_dim: usize,
        action_dim: usize,
        chunk_len: usize,
        denoiser: Mlp,
        schedule: NoiseSchedule,
        timesteps: Vec<usize>,
        scaling: ActionScaling,
        adam: AdamConfig,
    ) -> Result<Self> {
        let latent = action_dim * chunk_len;
        let want_in = state_dim + latent + TIME_EMBED_DIM;
        if denoiser.input_width() != want_in {
            return Err(dim("denoiser input", want_in, denoiser.input_width()));
        }
        if denoiser.output_width() != latent {
            return Err(dim("denoiser output", latent, denoiser.output_width()));
        }
        if scaling.dim() != latent {
            return Err(dim("action scaling", latent, scaling.dim()));
        }
        let strictly_decreasing = timesteps.windows(2).all(|p| p[0] > p[1]);
        if timesteps.is_empty()
            || !strictly_decreasing
            || timesteps[0] != schedule.steps()
            || *timesteps.last().unwrap() == 0
        {
            return Err(PolicyError::Config(format!("bad inference steps {timesteps:?}")));
        }
        let optimizer = Adam::new(denoiser.num_params(), adam);
        Ok(Self {
            state_dim,
            action_dim,
            chunk_len,
            denoiser,
            schedule,
            timesteps,
            scaling,
            optimizer,
        })
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

    pub fn denoiser(&self) -> &Mlp {
        &self.denoiser
    }

    pub fn denoiser_mut(&mut self) -> &mut Mlp {
        &mut self.denoiser
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn inference_timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    pub fn scaling(&self) -> &ActionScaling {
        &self.scaling
    }

    pub fn optimizer(&self) -> &Adam {
        &self.optimizer
    }

    /// Denoiser inputs `[state, x, embed(t)]` for `n` rows.
    fn inputs(&self, states: &[f64], x: &[f64], steps: &[usize]) -> Tensor {
        let (sd, ld) = (self.state_dim, self.latent_dim());
        let n = steps.len();
        let width = sd + ld + TIME_EMBED_DIM;
        let mut data = Vec::with_capacity(n * width);
        for i in 0..n {
            data.extend_from_slice(&states[i * sd..(i + 1) * sd]);
            data.extend_from_slice(&x[i * ld..(i + 1) * ld]);
            data.extend_from_slice(&sinusoidal_embedding(steps[i] as f64));
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

    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> NoiseDraws {
        let steps = (0..n).map(|_| rng.random_range(1..=self.schedule.steps())).collect();
        let eps = (0..n * self.latent_dim()).map(|_| rng.sample(StandardNormal)).collect();
        NoiseDraws { steps, eps }
    }

    /// Mean over the batch of `||eps_hat - eps||^2` and its gradient.
    fn loss_and_grad(&self, batch: &BcBatch, draws: &NoiseDraws, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let ld = self.latent_dim();
        let n = batch.len;
        let mut x = vec![0.0; n * ld];
        let mut a_model = vec![0.0; ld];
        for i in 0..n {
            self.scaling.to_model(&batch.actions[i * ld..(i + 1) * ld], &mut a_model);
            let ab = self.schedule.alpha_bar(draws.steps[i]);
            let xt = forward_with(ab, &a_model, &draws.eps[i * ld..(i + 1) * ld]);
            x[i * ld..(i + 1) * ld].copy_from_slice(&xt);
        }
        let input = self.inputs(&batch.states, &x, &draws.steps);
        let (pred, cache) = self.denoiser.forward_cached(&input)?;
        let (loss, up) = regression_loss(pred.data(), &draws.eps, n);
        if !want_grad {
            return Ok((loss, None));
        }
        let upstream = Tensor::matrix(n, ld, up)?;
        let grads = self.denoiser.backward(&cache, &upstream)?;
        Ok((loss, Some(grads.params)))
    }

    /// Denoising loss on fresh draws without updating the network.
    pub fn bc_loss<R: Rng + ?Sized>(&self, batch: &BcBatch, rng: &mut R) -> Result<f64> {
        self.check_batch(batch)?;
        let draws = self.draw(batch.len, rng);
        Ok(self.loss_and_grad(batch, &draws, false)?.0)
    }

    /// One Adam step on the denoising objective with `t ~ U{1..T}`,
    /// `eps ~ N(0, I)`. Returns the pre-update loss.
    pub fn bc_train_step<R: Rng + ?Sized>(&mut self, batch: &BcBatch, rng: &mut R) -> Result<f64> {
        self.check_batch(batch)?;
        let draws = self.draw(batch.len, rng);
        let (loss, grads) = self.loss_and_grad(batch, &draws, true)?;
        self.optimizer.step(self.denoiser.params_mut(), &grads.expect("gradient requested"))?;
        Ok(loss)
    }

    /// Runs the reverse process from `x_start` (model space) along `steps`,
    /// finishing at `alpha_bar(0) = 1`, and returns clamped raw actions.
    pub fn reverse_process<R: Rng + ?Sized>(
        &self,
        states: &[f64],
        x_start: &[f64],
        n: usize,
        steps: &[usize],
        eta: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.run_reverse(states, x_start, n, steps, eta, || rng.sample(StandardNormal))
    }

    fn run_reverse(
        &self,
        states: &[f64],
        x_start: &[f64],
        n: usize,
        steps: &[usize],
        eta: f64,
        mut gaussian: impl FnMut() -> f64,
    ) -> Result<Vec<f64>> {
        let (sd, ld) = (self.state_dim, self.latent_dim());
        if states.len() != n * sd {
            return Err(dim("state batch", n * sd, states.len()));
        }
        if x_start.len() != n * ld {
            return Err(dim("noise batch", n * ld, x_start.len()));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut x = x_start.to_vec();
        let mut step_col = vec![0; n];
        for (k, &t) in steps.iter().enumerate() {
            let t_prev = steps.get(k + 1).copied().unwrap_or(0);
            let c = self.schedule.reverse_coefficients(t, t_prev, eta)?;
            step_col.fill(t);
            let eps_hat = self.denoiser.forward(&self.inputs(states, &x, &step_col))?;
            for (xi, e) in x.iter_mut().zip(eps_hat.data()) {
                *xi = c.alpha * (*xi - c.beta * e);
            }
            if c.sigma > 0.0 {
                for xi in x.iter_mut() {
                    *xi += c.sigma * gaussian();
                }
            }
        }
        let mut out = vec![0.0; n * ld];
        for i in 0..n {
            self.scaling.to_env(&x[i * ld..(i + 1) * ld], &mut out[i * ld..(i + 1) * ld]);
        }
        Ok(out)
    }

    /// Deterministic DDIM decode of `n` rows with `x_T = noise`.
    pub fn ddim_sample_batch(&self, states: &[f64], noises: &[f64], n: usize) -> Result<Vec<f64>> {
        // sigma is identically zero, so no Gaussian is ever drawn
        self.run_reverse(states, noises, n, &self.timesteps, 0.0, || 0.0)
    }

    pub fn ddim_sample(&self, state: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        if noise.len() != self.latent_dim() {
            return Err(dim("noise", self.latent_dim(), noise.len()));
        }
        self.ddim_sample_batch(state, noise, 1)
    }

    /// Stochastic ancestral sampling over all `T` steps.
    pub fn ddpm_sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let x_t: Vec<f64> = (0..self.latent_dim()).map(|_| rng.sample(StandardNormal)).collect();
        let steps: Vec<usize> = (1..=self.schedule.steps()).rev().collect();
        self.reverse_process(state, &x_t, 1, &steps, 1.0, rng)
    }
}
