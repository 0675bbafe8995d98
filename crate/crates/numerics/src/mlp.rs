use rand::Rng;

use crate::fastmath;
use crate::norm::{normalize_row, normalize_row_backward};
use crate::tensor::{gemm, Transpose};
use crate::{NumericsError, Result, Tensor};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    /// Tanh approximation of GELU.
    Gelu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => fastmath::tanh(x),
            Activation::Gelu => {
                let t = fastmath::tanh(SQRT_2_OVER_PI * (x + GELU_C * x * x * x));
                0.5 * x * (1.0 + t)
            }
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Gelu => {
                let t = fastmath::tanh(SQRT_2_OVER_PI * (x + GELU_C * x * x * x));
                0.5 * (1.0 + t)
                    + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x)
            }
        }
    }

    fn apply_all(self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::Tanh => z.iter().map(|&x| fastmath::tanh(x)).collect(),
            Activation::Gelu => z.iter().map(|&x| Activation::Gelu.apply(x)).collect(),
        }
    }

    /// `g[i] *= f'(pre[i])`.
    fn scale_by_derivative(self, g: &mut [f64], pre: &[f64], out: &[f64]) {
        match self {
            Activation::Tanh => {
                for (gi, y) in g.iter_mut().zip(out) {
                    *gi *= 1.0 - y * y;
                }
            }
            Activation::Gelu => {
                for (gi, (&x, &y)) in g.iter_mut().zip(pre.iter().zip(out)) {
                    *gi *= Activation::Gelu.derivative(x, y);
                }
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Gelu => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Gelu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    /// Input width, hidden widths, output width.
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// Layer norm on every hidden layer (never the output layer).
    pub layer_norm: bool,
}

impl MlpConfig {
    pub fn new(input: usize, hidden: &[usize], output: usize, activation: Activation, layer_norm: bool) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self {
            widths,
            activation,
            layer_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
    /// Offset of the norm gain; the norm bias follows it.
    norm: Option<usize>,
}

/// Fully connected network: `Linear -> [LayerNorm] -> activation` for every
/// hidden layer and a plain linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    layer_norm: Vec<bool>,
    params: Vec<f64>,
    layout: Vec<LayerLayout>,
}

/// Intermediate values kept by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    batch: usize,
    inputs: Vec<Vec<f64>>,
    x_hat: Vec<Vec<f64>>,
    inv_std: Vec<Vec<f64>>,
    pre_act: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpGradients {
    /// Same layout as [`Mlp::params`].
    pub params: Vec<f64>,
    pub input: Tensor,
}

fn build_layout(widths: &[usize], layer_norm: &[bool]) -> (Vec<LayerLayout>, usize) {
    let mut layout = Vec::with_capacity(widths.len() - 1);
    let mut offset = 0;
    for (l, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let weight = offset;
        offset += fan_in * fan_out;
        let bias = offset;
        offset += fan_out;
        let norm = if layer_norm[l] {
            let g = offset;
            offset += 2 * fan_out;
            Some(g)
        } else {
            None
        };
        layout.push(LayerLayout {
            fan_in,
            fan_out,
            weight,
            bias,
            norm,
        });
    }
    (layout, offset)
}

impl Mlp {
    /// Fan-in scaled uniform weights, zero biases, unit norm gains.
    pub fn new<R: Rng + ?Sized>(config: &MlpConfig, rng: &mut R) -> Result<Self> {
        let widths = &config.widths;
        let n_layers = widths.len().saturating_sub(1);
        let flags: Vec<bool> = (0..n_layers)
            .map(|l| config.layer_norm && l + 1 < n_layers)
            .collect();
        let mut net = Self::zeros(widths, config.activation, &flags)?;
        for l in 0..net.layout.len() {
            let lay = net.layout[l].clone();
            let bound = 1.0 / (lay.fan_in as f64).sqrt();
            for w in &mut net.params[lay.weight..lay.weight + lay.fan_in * lay.fan_out] {
                *w = rng.random_range(-bound..bound);
            }
            if let Some(g) = lay.norm {
                net.params[g..g + lay.fan_out].fill(1.0);
            }
        }
        Ok(net)
    }

    /// All-zero parameters (norm gains included).
    pub fn zeros(widths: &[usize], activation: Activation, layer_norm: &[bool]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NumericsError::Config(format!("bad widths {widths:?}")));
        }
        if layer_norm.len() != widths.len() - 1 {
            return Err(NumericsError::Config(format!(
                "{} layer-norm flags for {} layers",
                layer_norm.len(),
                widths.len() - 1
            )));
        }
        if *layer_norm.last().unwrap() {
            return Err(NumericsError::Config("layer norm on the output layer".into()));
        }
        let (layout, n) = build_layout(widths, layer_norm);
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            layer_norm: layer_norm.to_vec(),
            params: vec![0.0; n],
            layout,
        })
    }

    pub fn from_parts(
        widths: &[usize],
        activation: Activation,
        layer_norm: &[bool],
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut net = Self::zeros(widths, activation, layer_norm)?;
        if params.len() != net.params.len() {
            return Err(NumericsError::shape(
                "Mlp::from_parts",
                &[net.params.len()],
                &[params.len()],
            ));
        }
        net.params = params;
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_norm_flags(&self) -> &[bool] {
        &self.layer_norm
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Weight matrix of layer `l`, stored `fan_out x fan_in`.
    pub fn weight(&self, l: usize) -> &[f64] {
        let lay = &self.layout[l];
        &self.params[lay.weight..lay.weight + lay.fan_in * lay.fan_out]
    }

    pub fn weight_mut(&mut self, l: usize) -> &mut [f64] {
        let lay = self.layout[l].clone();
        &mut self.params[lay.weight..lay.weight + lay.fan_in * lay.fan_out]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let lay = &self.layout[l];
        &self.params[lay.bias..lay.bias + lay.fan_out]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let lay = self.layout[l].clone();
        &mut self.params[lay.bias..lay.bias + lay.fan_out]
    }

    /// Norm gain and bias of hidden layer `l`, if it has one.
    pub fn norm_params(&self, l: usize) -> Option<(&[f64], &[f64])> {
        let lay = &self.layout[l];
        lay.norm.map(|g| {
            (
                &self.params[g..g + lay.fan_out],
                &self.params[g + lay.fan_out..g + 2 * lay.fan_out],
            )
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layout.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(NumericsError::shape(
                "mlp_forward",
                &[self.input_width()],
                &[x.cols()],
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let (out, _) = self.run(x, false);
        Ok(out)
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, MlpCache)> {
        self.check_input(x)?;
        let (out, cache) = self.run(x, true);
        Ok((out, cache.expect("cache requested")))
    }

    fn run(&self, x: &Tensor, keep: bool) -> (Tensor, Option<MlpCache>) {
        let batch = x.rows();
        let last = self.layout.len() - 1;
        let mut cache = MlpCache {
            batch,
            inputs: Vec::new(),
            x_hat: Vec::new(),
            inv_std: Vec::new(),
            pre_act: Vec::new(),
        };
        let mut h = x.data().to_vec();
        for (l, lay) in self.layout.iter().enumerate() {
            let mut z = vec![0.0; batch * lay.fan_out];
            let bias = &self.params[lay.bias..lay.bias + lay.fan_out];
            for row in z.chunks_exact_mut(lay.fan_out) {
                row.copy_from_slice(bias);
            }
            gemm(
                batch,
                lay.fan_in,
                lay.fan_out,
                1.0,
                &h,
                Transpose::No,
                self.weight(l),
                Transpose::Yes,
                1.0,
                &mut z,
            );
            if l == last {
                if keep {
                    cache.inputs.push(h);
                }
                let out = Tensor::matrix(batch, lay.fan_out, z).expect("consistent shape");
                return (out, keep.then_some(cache));
            }
            let mut x_hat = Vec::new();
            let mut inv_std = Vec::new();
            if let Some(g) = lay.norm {
                let gain = &self.params[g..g + lay.fan_out];
                let beta = &self.params[g + lay.fan_out..g + 2 * lay.fan_out];
                x_hat = vec![0.0; z.len()];
                inv_std = Vec::with_capacity(batch);
                for (zr, hr) in z.chunks_exact_mut(lay.fan_out).zip(x_hat.chunks_exact_mut(lay.fan_out)) {
                    inv_std.push(normalize_row(zr, hr));
                    for j in 0..lay.fan_out {
                        zr[j] = gain[j] * hr[j] + beta[j];
                    }
                }
            }
            let next = self.activation.apply_all(&z);
            if keep {
                cache.inputs.push(h);
                cache.x_hat.push(x_hat);
                cache.inv_std.push(inv_std);
                cache.pre_act.push(z);
            }
            h = next;
        }
        unreachable!("loop returns at the output layer")
    }

    /// Reverse-mode gradients of `sum(upstream * forward(x))`.
    pub fn backward(&self, cache: &MlpCache, upstream: &Tensor) -> Result<MlpGradients> {
        let batch = cache.batch;
        if upstream.rows() != batch || upstream.cols() != self.output_width() {
            return Err(NumericsError::shape(
                "mlp_backward",
                &[batch, self.output_width()],
                upstream.shape(),
            ));
        }
        let mut grads = vec![0.0; self.params.len()];
        let last = self.layout.len() - 1;
        let mut g = upstream.data().to_vec();
        for l in (0..=last).rev() {
            let lay = &self.layout[l];
            let input = &cache.inputs[l];
            if l != last {
                // g: gradient w.r.t. this layer's activation output, which is
                // the next layer's input.
                let out = &cache.inputs[l + 1];
                let pre = &cache.pre_act[l];
                self.activation.scale_by_derivative(&mut g, pre, out);
                if let Some(goff) = lay.norm {
                    let n = lay.fan_out;
                    let x_hat = &cache.x_hat[l];
                    let inv_std = &cache.inv_std[l];
                    let mut dz = vec![0.0; g.len()];
                    let mut g_hat = vec![0.0; n];
                    for r in 0..batch {
                        let gr = &g[r * n..(r + 1) * n];
                        let hr = &x_hat[r * n..(r + 1) * n];
                        for j in 0..n {
                            grads[goff + j] += gr[j] * hr[j];
                            grads[goff + n + j] += gr[j];
                            g_hat[j] = gr[j] * self.params[goff + j];
                        }
                        normalize_row_backward(hr, inv_std[r], &g_hat, &mut dz[r * n..(r + 1) * n]);
                    }
                    g = dz;
                }
            }
            gemm(
                lay.fan_out,
                batch,
                lay.fan_in,
                1.0,
                &g,
                Transpose::Yes,
                input,
                Transpose::No,
                0.0,
                &mut grads[lay.weight..lay.weight + lay.fan_in * lay.fan_out],
            );
            let db = &mut grads[lay.bias..lay.bias + lay.fan_out];
            for row in g.chunks_exact(lay.fan_out) {
                for (d, v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
            let mut g_in = vec![0.0; batch * lay.fan_in];
            gemm(
                batch,
                lay.fan_out,
                lay.fan_in,
                1.0,
                &g,
                Transpose::No,
                self.weight(l),
                Transpose::No,
                0.0,
                &mut g_in,
            );
            g = g_in;
        }
        Ok(MlpGradients {
            params: grads,
            input: Tensor::matrix(batch, self.input_width(), g)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(w: Vec<f64>, b: Vec<f64>, fan_in: usize) -> Mlp {
        let fan_out = b.len();
        let mut p = w;
        p.extend(b);
        Mlp::from_parts(&[fan_in, fan_out], Activation::Tanh, &[false], p).unwrap()
    }

    #[test]
    fn identity_layer() {
        let net = linear(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2);
        let y = net.forward(&Tensor::row_vector(vec![0.3, -0.7]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.3, -0.7]);
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut net = Mlp::zeros(&[3, 4, 2], Activation::Gelu, &[true, false]).unwrap();
        net.bias_mut(1).copy_from_slice(&[0.25, -1.5]);
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.1, 0.2, 0.3]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.data(), &[0.25, -1.5, 0.25, -1.5]);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let net = Mlp::zeros(&[3, 2], Activation::Tanh, &[false]).unwrap();
        assert!(net.forward(&Tensor::row_vector(vec![1.0, 2.0]).unwrap()).is_err());
    }

    #[test]
    fn rejects_output_layer_norm() {
        assert!(Mlp::zeros(&[3, 4, 2], Activation::Tanh, &[true, true]).is_err());
    }

    #[test]
    fn matches_hand_rolled_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = MlpConfig::new(3, &[5], 2, Activation::Tanh, false);
        let net = Mlp::new(&cfg, &mut rng).unwrap();
        let x = [0.4, -1.2, 0.9];
        // oracle: explicit nested loops over the documented layout
        let p = net.params();
        let (w0, rest) = p.split_at(15);
        let (b0, rest) = rest.split_at(5);
        let (w1, b1) = rest.split_at(10);
        let mut h = [0.0; 5];
        for o in 0..5 {
            let mut acc = b0[o];
            for i in 0..3 {
                acc += w0[o * 3 + i] * x[i];
            }
            h[o] = acc.tanh();
        }
        let mut y = [0.0; 2];
        for o in 0..2 {
            let mut acc = b1[o];
            for i in 0..5 {
                acc += w1[o * 5 + i] * h[i];
            }
            y[o] = acc;
        }
        let got = net.forward(&Tensor::row_vector(x.to_vec()).unwrap()).unwrap();
        for o in 0..2 {
            assert!((got.data()[o] - y[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let net = linear(vec![0.5, -0.2, 0.1, 0.3, 0.7, -0.4], vec![0.0, 0.0], 3);
        let x = Tensor::row_vector(vec![1.0, 2.0, -1.0]).unwrap();
        let (_, cache) = net.forward_cached(&x).unwrap();
        let g = Tensor::row_vector(vec![0.5, -2.0]).unwrap();
        let grads = net.backward(&cache, &g).unwrap();
        let want = [0.5, 1.0, -0.5, -2.0, -4.0, 2.0];
        assert_eq!(&grads.params[..6], &want);
        assert_eq!(&grads.params[6..], &[0.5, -2.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = MlpConfig::new(4, &[8, 8], 3, Activation::Gelu, true);
        let net = Mlp::new(&cfg, &mut rng).unwrap();
        let x = Tensor::matrix(2, 4, (0..8).map(|v| v as f64 * 0.1).collect()).unwrap();
        let (_, cache) = net.forward_cached(&x).unwrap();
        let grads = net.backward(&cache, &Tensor::zeros(vec![2, 3]).unwrap()).unwrap();
        assert!(grads.params.iter().all(|g| *g == 0.0));
        assert!(grads.input.data().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = MlpConfig::new(4, &[16, 16], 2, Activation::Tanh, true);
        let net = Mlp::new(&cfg, &mut rng).unwrap();
        let x = Tensor::matrix(3, 4, (0..12).map(|v| (v as f64).cos()).collect()).unwrap();
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
