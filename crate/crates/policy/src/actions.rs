/// Affine map between raw environment actions and the model's working space,
/// plus the clamp applied to every decoded action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionScaling {
    /// Per-component bounds over the whole chunk.
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ActionScaling {
    /// Maps `[low, high]` onto `[-1, 1]`. Bounds are per single-step action and
    /// are tiled over the chunk.
    pub fn normalized(low: &[f64], high: &[f64], chunk_len: usize) -> Self {
        let low = low.repeat(chunk_len);
        let high = high.repeat(chunk_len);
        let offset = low.iter().zip(&high).map(|(l, h)| 0.5 * (l + h)).collect();
        let scale = low.iter().zip(&high).map(|(l, h)| 0.5 * (h - l)).collect();
        Self {
            low,
            high,
            offset,
            scale,
        }
    }

    /// Works directly in raw action units; only the clamp applies.
    pub fn identity(low: &[f64], high: &[f64], chunk_len: usize) -> Self {
        let low = low.repeat(chunk_len);
        let high = high.repeat(chunk_len);
        let n = low.len();
        Self {
            low,
            high,
            offset: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn to_model(&self, a: &[f64], out: &mut [f64]) {
        for i in 0..a.len() {
            let j = i % self.dim();
            out[i] = (a[i] - self.offset[j]) / self.scale[j];
        }
    }

    /// Model-space sample to a clamped raw action.
    pub fn to_env(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            let j = i % self.dim();
            out[i] = (x[i] * self.scale[j] + self.offset[j]).clamp(self.low[j], self.high[j]);
        }
    }
}
