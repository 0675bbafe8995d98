use crate::{NumericsError, Result};

/// Variance stabilizer inside the square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalizes `x` to zero mean and unit population variance, then applies
/// `gain * x_hat + bias`.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    if gain.len() != x.len() || bias.len() != x.len() {
        return Err(NumericsError::shape(
            "layer_norm",
            &[x.len(), x.len()],
            &[gain.len(), bias.len()],
        ));
    }
    let mut out = vec![0.0; x.len()];
    let mut x_hat = vec![0.0; x.len()];
    normalize_row(x, &mut x_hat);
    for i in 0..x.len() {
        out[i] = gain[i] * x_hat[i] + bias[i];
    }
    Ok(out)
}

/// Writes the normalized row into `x_hat` and returns `1 / sqrt(var + eps)`.
pub(crate) fn normalize_row(x: &[f64], x_hat: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for (h, v) in x_hat.iter_mut().zip(x) {
        *h = (v - mean) * inv_std;
    }
    inv_std
}

/// Backward pass through normalization only (not the affine part).
///
/// `g_hat` is the gradient w.r.t. `x_hat`; the result is written to `dx`.
pub(crate) fn normalize_row_backward(x_hat: &[f64], inv_std: f64, g_hat: &[f64], dx: &mut [f64]) {
    let n = x_hat.len() as f64;
    let mean_g = g_hat.iter().sum::<f64>() / n;
    let mean_gx = g_hat.iter().zip(x_hat).map(|(g, h)| g * h).sum::<f64>() / n;
    for i in 0..x_hat.len() {
        dx[i] = inv_std * (g_hat[i] - mean_g - x_hat[i] * mean_gx);
    }
}
