use crate::error::dim;
use crate::{PolicyError, Result};

/// Linear beta schedule with cumulative products, indexed `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Coefficients of one reverse step
/// `x_prev = alpha * (x_t - beta * eps_hat) + sigma * z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl NoiseSchedule {
    /// `beta_t = beta_min + (t-1)/(T-1) * (beta_max - beta_min)`.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(PolicyError::Schedule("need at least one step".into()));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(PolicyError::Schedule(format!(
                "need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}"
            )));
        }
        let betas: Vec<f64> = (1..=steps)
            .map(|t| {
                if steps == 1 {
                    beta_min
                } else {
                    beta_min + (t - 1) as f64 / (steps - 1) as f64 * (beta_max - beta_min)
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(PolicyError::Schedule("betas must lie in (0, 1)".into()));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `alpha_bar(0) = 1` by convention.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(PolicyError::Timestep {
                t,
                max: self.steps(),
            });
        }
        Ok(())
    }

    /// `x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps`.
    pub fn forward_noise(&self, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_t(t)?;
        if eps.len() != x0.len() {
            return Err(dim("noise", x0.len(), eps.len()));
        }
        let ab = self.alpha_bar(t);
        Ok(forward_with(ab, x0, eps))
    }

    /// Reverse step from `t` to `t_prev < t`. `eta = 0` is deterministic DDIM,
    /// `eta = 1` over consecutive steps is DDPM ancestral sampling.
    pub fn reverse_coefficients(&self, t: usize, t_prev: usize, eta: f64) -> Result<ReverseCoefficients> {
        self.check_t(t)?;
        if t_prev >= t {
            return Err(PolicyError::Schedule(format!("reverse step {t} -> {t_prev}")));
        }
        let ab_t = self.alpha_bar(t);
        let ab_p = self.alpha_bar(t_prev);
        let sigma = eta * ((1.0 - ab_p) / (1.0 - ab_t)).sqrt() * (1.0 - ab_t / ab_p).sqrt();
        let alpha = (ab_p / ab_t).sqrt();
        let direction = (1.0 - ab_p - sigma * sigma).max(0.0).sqrt();
        let beta = (1.0 - ab_t).sqrt() - direction / alpha;
        Ok(ReverseCoefficients { alpha, beta, sigma })
    }
}

pub(crate) fn forward_with(alpha_bar: f64, x0: &[f64], eps: &[f64]) -> Vec<f64> {
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect()
}

/// `k` evenly spaced, strictly decreasing steps starting at `T`.
pub fn ddim_timesteps(train_steps: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > train_steps {
        return Err(PolicyError::Config(format!(
            "inference steps {k} must be in 1..={train_steps}"
        )));
    }
    Ok((0..k)
        .map(|i| (train_steps * (k - i)).div_ceil(k))
        .collect())
}
