use dsrl_numerics::{Adam, AdamConfig};

use crate::Result;

/// Entropy temperature `alpha`, learned in log space or held fixed.
#[derive(Debug, Clone)]
pub struct Temperature {
    log_alpha: f64,
    target_entropy: f64,
    fixed: Option<f64>,
    opt: Adam,
}

impl Temperature {
    pub fn learned(init_alpha: f64, target_entropy: f64, lr: f64) -> Self {
        Self {
            log_alpha: init_alpha.ln(),
            target_entropy,
            fixed: None,
            opt: Adam::new(1, AdamConfig::with_lr(lr)),
        }
    }

    /// A constant temperature; `0` turns the entropy terms off.
    pub fn fixed(alpha: f64) -> Self {
        Self {
            log_alpha: alpha.ln(),
            target_entropy: 0.0,
            fixed: Some(alpha),
            opt: Adam::new(1, AdamConfig::default()),
        }
    }

    pub fn from_parts(log_alpha: f64, target_entropy: f64, fixed: Option<f64>, opt: Adam) -> Self {
        Self {
            log_alpha,
            target_entropy,
            fixed,
            opt,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.fixed.unwrap_or_else(|| self.log_alpha.exp())
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn fixed_value(&self) -> Option<f64> {
        self.fixed
    }

    pub fn optimizer(&self) -> &Adam {
        &self.opt
    }

    /// One step on `-log_alpha * (mean(logp) + target_entropy)`. When the
    /// policy entropy `-mean(logp)` is above target, alpha shrinks. A fixed
    /// temperature reports zero loss.
    pub fn update(&mut self, logp: &[f64]) -> Result<f64> {
        let mean_logp = logp.iter().sum::<f64>() / logp.len().max(1) as f64;
        let slack = mean_logp + self.target_entropy;
        if self.fixed.is_some() {
            return Ok(0.0);
        }
        let loss = -self.log_alpha * slack;
        let mut p = [self.log_alpha];
        self.opt.step(&mut p, &[-slack])?;
        self.log_alpha = p[0];
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_moves_toward_target_entropy() {
        // entropy 2 > target 0: alpha decreases
        let mut t = Temperature::learned(1.0, 0.0, 1e-2);
        t.update(&[-2.0, -2.0]).unwrap();
        assert!(t.alpha() < 1.0);
        // entropy -1 < target 0: alpha increases
        let mut t = Temperature::learned(1.0, 0.0, 1e-2);
        t.update(&[1.0]).unwrap();
        assert!(t.alpha() > 1.0);
    }

    #[test]
    fn fixed_alpha_never_moves() {
        let mut t = Temperature::fixed(0.0);
        t.update(&[5.0]).unwrap();
        assert_eq!(t.alpha(), 0.0);
    }
}
