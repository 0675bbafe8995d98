use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("noise box half-width must be positive and finite, got {0}")]
pub struct NoiseBoxError(pub f64);

/// The latent action space `[-half_width, half_width]^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBox {
    half_width: f64,
    dim: usize,
}

impl NoiseBox {
    pub fn new(half_width: f64, dim: usize) -> Result<Self, NoiseBoxError> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(NoiseBoxError(half_width));
        }
        Ok(Self { half_width, dim })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clip(&self, w: &[f64]) -> Vec<f64> {
        w.iter().map(|v| v.clamp(-self.half_width, self.half_width)).collect()
    }

    pub fn clip_in_place(&self, w: &mut [f64]) {
        for v in w {
            *v = v.clamp(-self.half_width, self.half_width);
        }
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.dim && w.iter().all(|v| v.abs() <= self.half_width)
    }
}

/// Repeats a single-step latent across the chunk axis.
pub fn noise_broadcast(single: &[f64], chunk_len: usize) -> Vec<f64> {
    single.repeat(chunk_len)
}
