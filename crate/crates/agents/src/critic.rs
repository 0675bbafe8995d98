use dsrl_numerics::{polyak_update, Activation, Adam, AdamConfig, Mlp, MlpConfig, Tensor};
use rand::Rng;
use rayon::prelude::*;

use crate::error::dim;
use crate::{AgentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Clipped double-Q.
    Min,
    Mean,
}

impl Aggregation {
    pub fn code(self) -> u64 {
        match self {
            Aggregation::Min => 0,
            Aggregation::Mean => 1,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(Aggregation::Min),
            1 => Some(Aggregation::Mean),
            _ => None,
        }
    }
}

/// `N` scalar critics over `(state, x)` with optional Polyak-averaged targets.
#[derive(Debug, Clone)]
pub struct CriticEnsemble {
    nets: Vec<Mlp>,
    opts: Vec<Adam>,
    targets: Option<Vec<Mlp>>,
    aggregation: Aggregation,
    state_dim: usize,
    x_dim: usize,
}

impl CriticEnsemble {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        x_dim: usize,
        count: usize,
        hidden: &[usize],
        activation: Activation,
        layer_norm: bool,
        lr: f64,
        aggregation: Aggregation,
        with_targets: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if count == 0 {
            return Err(AgentError::Config("critic ensemble needs at least one member".into()));
        }
        let cfg = MlpConfig::new(state_dim + x_dim, hidden, 1, activation, layer_norm);
        let nets = (0..count)
            .map(|_| Mlp::new(&cfg, rng))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let opts = nets
            .iter()
            .map(|n| Adam::new(n.num_params(), AdamConfig::with_lr(lr)))
            .collect();
        let targets = with_targets.then(|| nets.clone());
        Ok(Self {
            nets,
            opts,
            targets,
            aggregation,
            state_dim,
            x_dim,
        })
    }

    pub fn from_parts(
        nets: Vec<Mlp>,
        opts: Vec<Adam>,
        targets: Option<Vec<Mlp>>,
        aggregation: Aggregation,
        state_dim: usize,
    ) -> Result<Self> {
        if nets.is_empty() || opts.len() != nets.len() {
            return Err(AgentError::Config("critic and optimizer counts differ".into()));
        }
        let width = nets[0].input_width();
        if width <= state_dim {
            return Err(dim("critic input", state_dim + 1, width));
        }
        for (i, n) in nets.iter().enumerate() {
            if n.widths() != nets[0].widths() || n.output_width() != 1 {
                return Err(AgentError::Config(format!("critic {i} has a different shape")));
            }
            if opts[i].first_moment().len() != n.num_params() {
                return Err(dim("critic optimizer", n.num_params(), opts[i].first_moment().len()));
            }
        }
        if let Some(t) = &targets {
            if t.len() != nets.len() || t.iter().any(|t| t.widths() != nets[0].widths()) {
                return Err(AgentError::Config("target critics do not match".into()));
            }
        }
        Ok(Self {
            x_dim: width - state_dim,
            nets,
            opts,
            targets,
            aggregation,
            state_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    pub fn nets(&self) -> &[Mlp] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [Mlp] {
        &mut self.nets
    }

    pub fn optimizers(&self) -> &[Adam] {
        &self.opts
    }

    /// Sets the learning rate of every member's optimizer.
    pub fn set_lr(&mut self, lr: f64) {
        for opt in &mut self.opts {
            opt.config.lr = lr;
        }
    }

    pub fn targets(&self) -> Option<&[Mlp]> {
        self.targets.as_deref()
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    fn input(&self, states: &[f64], xs: &[f64], n: usize) -> Result<Tensor> {
        if n == 0 {
            return Err(AgentError::EmptyBatch);
        }
        let (sd, xd) = (self.state_dim, self.x_dim);
        if states.len() != n * sd {
            return Err(dim("critic states", n * sd, states.len()));
        }
        if xs.len() != n * xd {
            return Err(dim("critic actions", n * xd, xs.len()));
        }
        let mut data = Vec::with_capacity(n * (sd + xd));
        for r in 0..n {
            data.extend_from_slice(&states[r * sd..(r + 1) * sd]);
            data.extend_from_slice(&xs[r * xd..(r + 1) * xd]);
        }
        Ok(Tensor::matrix(n, sd + xd, data)?)
    }

    fn eval(nets: &[Mlp], x: &Tensor) -> Result<Vec<Vec<f64>>> {
        nets.par_iter()
            .map(|net| Ok(net.forward(x)?.into_data()))
            .collect()
    }

    /// Per-member values, `values[i][row]`.
    pub fn values(&self, states: &[f64], xs: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
        Self::eval(&self.nets, &self.input(states, xs, n)?)
    }

    pub fn target_values(&self, states: &[f64], xs: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
        let targets = self
            .targets
            .as_ref()
            .ok_or_else(|| AgentError::Config("ensemble has no target critics".into()))?;
        Self::eval(targets, &self.input(states, xs, n)?)
    }

    pub fn aggregate(&self, per_member: &[Vec<f64>]) -> Vec<f64> {
        let n = per_member[0].len();
        (0..n)
            .map(|r| match self.aggregation {
                Aggregation::Min => per_member
                    .iter()
                    .map(|v| v[r])
                    .fold(f64::INFINITY, f64::min),
                Aggregation::Mean => {
                    per_member.iter().map(|v| v[r]).sum::<f64>() / per_member.len() as f64
                }
            })
            .collect()
    }

    pub fn q(&self, states: &[f64], xs: &[f64], n: usize) -> Result<Vec<f64>> {
        Ok(self.aggregate(&self.values(states, xs, n)?))
    }

    pub fn target_q(&self, states: &[f64], xs: &[f64], n: usize) -> Result<Vec<f64>> {
        Ok(self.aggregate(&self.target_values(states, xs, n)?))
    }

    /// One Adam step per member on the batch-mean squared error to `targets`.
    /// Returns the loss averaged over members (measured before the step).
    pub fn update(&mut self, states: &[f64], xs: &[f64], targets: &[f64], n: usize) -> Result<f64> {
        if targets.len() != n {
            return Err(dim("critic targets", n, targets.len()));
        }
        let x = self.input(states, xs, n)?;
        let losses: Vec<f64> = self
            .nets
            .par_iter_mut()
            .zip(self.opts.par_iter_mut())
            .map(|(net, opt)| -> Result<f64> {
                let (q, cache) = net.forward_cached(&x)?;
                let mut loss = 0.0;
                let mut up = Vec::with_capacity(n);
                for (qv, y) in q.data().iter().zip(targets) {
                    let e = qv - y;
                    loss += e * e;
                    up.push(2.0 * e / n as f64);
                }
                let grads = net.backward(&cache, &Tensor::matrix(n, 1, up)?)?;
                opt.step(net.params_mut(), &grads.params)?;
                Ok(loss / n as f64)
            })
            .collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    /// Aggregated value and its gradient with respect to the `x` input,
    /// row-major `n x x_dim`. Under `Min` each row follows its minimizing member.
    pub fn input_gradient(&self, states: &[f64], xs: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.input(states, xs, n)?;
        let cached: Vec<_> = self
            .nets
            .par_iter()
            .map(|net| net.forward_cached(&x))
            .collect::<std::result::Result<_, _>>()?;
        let per: Vec<Vec<f64>> = cached.iter().map(|(q, _)| q.data().to_vec()).collect();
        let agg = self.aggregate(&per);
        let m = self.nets.len();
        let weights: Vec<Vec<f64>> = match self.aggregation {
            Aggregation::Mean => vec![vec![1.0 / m as f64; n]; m],
            Aggregation::Min => {
                let mut w = vec![vec![0.0; n]; m];
                for r in 0..n {
                    let mut best = 0;
                    for i in 1..m {
                        if per[i][r] < per[best][r] {
                            best = i;
                        }
                    }
                    w[best][r] = 1.0;
                }
                w
            }
        };
        let grads: Vec<Tensor> = self
            .nets
            .par_iter()
            .zip(cached.par_iter())
            .zip(weights.into_par_iter())
            .map(|((net, (_, cache)), w)| Ok(net.backward(cache, &Tensor::matrix(n, 1, w)?)?.input))
            .collect::<Result<_>>()?;
        let (sd, xd) = (self.state_dim, self.x_dim);
        let mut out = vec![0.0; n * xd];
        for g in &grads {
            for r in 0..n {
                for j in 0..xd {
                    out[r * xd + j] += g.row(r)[sd + j];
                }
            }
        }
        Ok((agg, out))
    }

    pub fn polyak(&mut self, tau: f64) -> Result<()> {
        if let Some(targets) = &mut self.targets {
            for (t, o) in targets.iter_mut().zip(&self.nets) {
                polyak_update(t.params_mut(), o.params(), tau)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ensemble(count: usize, agg: Aggregation, seed: u64) -> CriticEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CriticEnsemble::new(2, 1, count, &[8], Activation::Tanh, false, 1e-2, agg, true, &mut rng).unwrap()
    }

    #[test]
    fn aggregation_modes() {
        let c = ensemble(3, Aggregation::Min, 0);
        let per = vec![vec![1.0, 5.0], vec![2.0, -1.0], vec![0.5, 3.0]];
        assert_eq!(c.aggregate(&per), vec![0.5, -1.0]);
        let c = ensemble(3, Aggregation::Mean, 0);
        assert_eq!(c.aggregate(&per), vec![3.5 / 3.0, 7.0 / 3.0]);
    }

    #[test]
    fn polyak_contracts_geometrically() {
        let mut c = ensemble(2, Aggregation::Min, 1);
        for net in c.nets_mut() {
            for p in net.params_mut() {
                *p += 1.0;
            }
        }
        let gap0: Vec<f64> = c.nets[0].params().iter().zip(c.targets().unwrap()[0].params()).map(|(o, t)| o - t).collect();
        let tau = 0.005;
        for _ in 0..100 {
            c.polyak(tau).unwrap();
        }
        let factor = (1.0 - tau).powi(100);
        for ((o, t), g0) in c.nets[0].params().iter().zip(c.targets().unwrap()[0].params()).zip(&gap0) {
            assert!(((o - t) - g0 * factor).abs() < 1e-12);
        }
    }

    #[test]
    fn single_polyak_step_moves_half_a_percent() {
        let mut c = ensemble(1, Aggregation::Min, 2);
        c.nets_mut()[0].params_mut()[0] += 1.0;
        let before = c.targets().unwrap()[0].params()[0];
        let online = c.nets()[0].params()[0];
        c.polyak(0.005).unwrap();
        let after = c.targets().unwrap()[0].params()[0];
        assert!(((after - before) - 0.005 * (online - before)).abs() < 1e-15);
    }

    #[test]
    fn regression_to_constant() {
        let mut c = ensemble(2, Aggregation::Mean, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 64;
        let mut last = 0.0;
        for _ in 0..2000 {
            let s: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            last = c.update(&s, &x, &vec![0.7; n], n).unwrap();
        }
        assert!(last < 1e-4, "loss {last}");
    }

    #[test]
    fn input_gradient_matches_finite_difference() {
        for agg in [Aggregation::Min, Aggregation::Mean] {
            let c = ensemble(3, agg, 5);
            let s = [0.1, -0.4, 0.6, 0.2];
            let x = [0.3, -0.7];
            let (_, g) = c.input_gradient(&s, &x, 2).unwrap();
            let h = 1e-6;
            for r in 0..2 {
                let mut xp = x;
                xp[r] += h;
                let mut xm = x;
                xm[r] -= h;
                let num = (c.q(&s, &xp, 2).unwrap()[r] - c.q(&s, &xm, 2).unwrap()[r]) / (2.0 * h);
                assert!((num - g[r]).abs() < 1e-7, "{agg:?}: {num} vs {}", g[r]);
            }
        }
    }
}
