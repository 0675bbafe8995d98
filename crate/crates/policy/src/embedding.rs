/// Width of the sinusoidal time features appended to every denoiser input.
pub const TIME_EMBED_DIM: usize = 16;

/// `[sin(t f_0), cos(t f_0), ..., sin(t f_7), cos(t f_7)]` with geometric
/// frequencies `f_i = 10000^(-i/8)`.
pub fn sinusoidal_embedding(t: f64) -> [f64; TIME_EMBED_DIM] {
    let half = TIME_EMBED_DIM / 2;
    let mut out = [0.0; TIME_EMBED_DIM];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        out[2 * i] = (t * freq).sin();
        out[2 * i + 1] = (t * freq).cos();
    }
    out
}
