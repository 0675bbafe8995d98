use dsrl_numerics::{Activation, Adam, AdamConfig, Mlp, MlpCache, MlpConfig, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::dim;
use crate::{AgentError, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// `log(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Gaussian over a pre-squash variable, pushed through `b * tanh(.)` so that
/// every sample lies in the noise box `[-b, b]^L`.
#[derive(Debug, Clone)]
pub struct SquashedGaussianActor {
    net: Mlp,
    opt: Adam,
    half_width: f64,
    latent_dim: usize,
}

/// A reparameterized batch of actor samples, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ActorSample {
    pub w: Vec<f64>,
    pub logp: Vec<f64>,
    pub n: usize,
    u: Vec<f64>,
    std: Vec<f64>,
    xi: Vec<f64>,
    clamped: Vec<bool>,
    cache: MlpCache,
}

impl SquashedGaussianActor {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        latent_dim: usize,
        half_width: f64,
        hidden: &[usize],
        activation: Activation,
        layer_norm: bool,
        lr: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let cfg = MlpConfig::new(state_dim, hidden, 2 * latent_dim, activation, layer_norm);
        let net = Mlp::new(&cfg, rng)?;
        let opt = Adam::new(net.num_params(), AdamConfig::with_lr(lr));
        Self::from_parts(net, opt, half_width)
    }

    pub fn from_parts(net: Mlp, opt: Adam, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(AgentError::Config(format!("noise half-width {half_width}")));
        }
        if !net.output_width().is_multiple_of(2) {
            return Err(AgentError::Config("actor output width must be even".into()));
        }
        if opt.first_moment().len() != net.num_params() {
            return Err(dim("actor optimizer", net.num_params(), opt.first_moment().len()));
        }
        let latent_dim = net.output_width() / 2;
        Ok(Self {
            net,
            opt,
            half_width,
            latent_dim,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn optimizer(&self) -> &Adam {
        &self.opt
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.opt.config.lr = lr;
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_width()
    }

    fn input(&self, states: &[f64], n: usize) -> Result<Tensor> {
        if n == 0 {
            return Err(AgentError::EmptyBatch);
        }
        if states.len() != n * self.state_dim() {
            return Err(dim("actor states", n * self.state_dim(), states.len()));
        }
        Ok(Tensor::matrix(n, self.state_dim(), states.to_vec())?)
    }

    /// `b * tanh(mean)`.
    pub fn deterministic(&self, states: &[f64], n: usize) -> Result<Vec<f64>> {
        let out = self.net.forward(&self.input(states, n)?)?;
        let l = self.latent_dim;
        let mut w = Vec::with_capacity(n * l);
        for r in 0..n {
            w.extend(out.row(r)[..l].iter().map(|m| self.half_width * m.tanh()));
        }
        Ok(w)
    }

    pub fn sample<R: Rng + ?Sized>(&self, states: &[f64], n: usize, rng: &mut R) -> Result<ActorSample> {
        let (out, cache) = self.net.forward_cached(&self.input(states, n)?)?;
        let l = self.latent_dim;
        let b = self.half_width;
        let mut s = ActorSample {
            w: Vec::with_capacity(n * l),
            logp: Vec::with_capacity(n),
            n,
            u: Vec::with_capacity(n * l),
            std: Vec::with_capacity(n * l),
            xi: Vec::with_capacity(n * l),
            clamped: Vec::with_capacity(n * l),
            cache,
        };
        for r in 0..n {
            let row = out.row(r);
            let mut logp = 0.0;
            for i in 0..l {
                let raw = row[l + i];
                let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let std = log_std.exp();
                let xi: f64 = rng.sample(StandardNormal);
                let u = row[i] + std * xi;
                logp += -0.5 * xi * xi - log_std - HALF_LOG_TWO_PI - b.ln() - log_one_minus_tanh_sq(u);
                s.w.push(b * u.tanh());
                s.u.push(u);
                s.std.push(std);
                s.xi.push(xi);
                s.clamped.push(raw != log_std);
            }
            s.logp.push(logp);
        }
        Ok(s)
    }

    /// Log-density of latents `w` (strictly inside the box) under the actor.
    pub fn log_prob(&self, states: &[f64], w: &[f64], n: usize) -> Result<Vec<f64>> {
        let out = self.net.forward(&self.input(states, n)?)?;
        let l = self.latent_dim;
        if w.len() != n * l {
            return Err(dim("latent batch", n * l, w.len()));
        }
        let b = self.half_width;
        Ok((0..n)
            .map(|r| {
                let row = out.row(r);
                (0..l)
                    .map(|i| {
                        let log_std = row[l + i].clamp(LOG_STD_MIN, LOG_STD_MAX);
                        let u = (w[r * l + i] / b).atanh();
                        let xi = (u - row[i]) / log_std.exp();
                        -0.5 * xi * xi - log_std - HALF_LOG_TWO_PI - b.ln() - log_one_minus_tanh_sq(u)
                    })
                    .sum()
            })
            .collect())
    }

    /// Parameter gradient of `mean_rows(alpha * logp - Q(s, w))` given the
    /// per-row `dQ/dw` at the sampled latents.
    pub fn gradient(&self, sample: &ActorSample, dq_dw: &[f64], alpha: f64) -> Result<Vec<f64>> {
        let (n, l) = (sample.n, self.latent_dim);
        if dq_dw.len() != n * l {
            return Err(dim("dQ/dw", n * l, dq_dw.len()));
        }
        let inv_n = 1.0 / n as f64;
        let mut up = vec![0.0; n * 2 * l];
        for r in 0..n {
            for i in 0..l {
                let k = r * l + i;
                let t = sample.u[k].tanh();
                let dl_du = alpha * 2.0 * t - dq_dw[k] * self.half_width * (1.0 - t * t);
                up[r * 2 * l + i] = dl_du * inv_n;
                if !sample.clamped[k] {
                    up[r * 2 * l + l + i] = (dl_du * sample.std[k] * sample.xi[k] - alpha) * inv_n;
                }
            }
        }
        let up = Tensor::matrix(n, 2 * l, up)?;
        Ok(self.net.backward(&sample.cache, &up)?.params)
    }

    pub fn apply_gradient(&mut self, grads: &[f64]) -> Result<()> {
        self.opt.step(self.net.params_mut(), grads)?;
        Ok(())
    }
}
