use dsrl_numerics::{Adam, AdamConfig, Checkpoint, Mlp};

use crate::{Aggregation, AgentError, CriticEnsemble, Result, SquashedGaussianActor, Temperature};

fn missing(e: impl std::fmt::Display) -> AgentError {
    AgentError::Checkpoint(e.to_string())
}

pub(crate) fn put_adam(c: &mut Checkpoint, prefix: &str, opt: &Adam) {
    let cfg = opt.config;
    c.put_f64(format!("{prefix}.config"), &[cfg.lr, cfg.beta1, cfg.beta2, cfg.eps]);
    c.put_f64(format!("{prefix}.m"), opt.first_moment());
    c.put_f64(format!("{prefix}.v"), opt.second_moment());
    c.put_u64(format!("{prefix}.step"), opt.step_count());
}

pub(crate) fn get_adam(c: &Checkpoint, prefix: &str) -> Result<Adam> {
    let cfg = c.f64s(&format!("{prefix}.config")).map_err(missing)?;
    if cfg.len() != 4 {
        return Err(AgentError::Checkpoint(format!("{prefix}.config has {} values", cfg.len())));
    }
    let config = AdamConfig {
        lr: cfg[0],
        beta1: cfg[1],
        beta2: cfg[2],
        eps: cfg[3],
    };
    let m = c.f64s(&format!("{prefix}.m")).map_err(missing)?.to_vec();
    let v = c.f64s(&format!("{prefix}.v")).map_err(missing)?.to_vec();
    let step = c.u64(&format!("{prefix}.step")).map_err(missing)?;
    Ok(Adam::from_parts(config, m, v, step)?)
}

fn get_mlp(c: &Checkpoint, name: &str) -> Result<Mlp> {
    Ok(c.mlp(name).map_err(missing)?.clone())
}

pub(crate) fn put_actor(c: &mut Checkpoint, prefix: &str, a: &SquashedGaussianActor) {
    c.put_mlp(format!("{prefix}.net"), a.net());
    c.put_f64(format!("{prefix}.half_width"), &[a.half_width()]);
    put_adam(c, &format!("{prefix}.adam"), a.optimizer());
}

pub(crate) fn get_actor(c: &Checkpoint, prefix: &str) -> Result<SquashedGaussianActor> {
    let net = get_mlp(c, &format!("{prefix}.net"))?;
    let hw = c.f64s(&format!("{prefix}.half_width")).map_err(missing)?;
    let opt = get_adam(c, &format!("{prefix}.adam"))?;
    SquashedGaussianActor::from_parts(net, opt, hw.first().copied().unwrap_or(f64::NAN))
}

pub(crate) fn put_critics(c: &mut Checkpoint, prefix: &str, e: &CriticEnsemble, state_dim: usize) {
    c.put_u64(format!("{prefix}.count"), e.len() as u64);
    c.put_u64(format!("{prefix}.aggregation"), e.aggregation().code());
    c.put_u64(format!("{prefix}.state_dim"), state_dim as u64);
    c.put_u64(format!("{prefix}.has_targets"), e.targets().is_some() as u64);
    for (i, net) in e.nets().iter().enumerate() {
        c.put_mlp(format!("{prefix}.{i}.net"), net);
        put_adam(c, &format!("{prefix}.{i}.adam"), &e.optimizers()[i]);
        if let Some(t) = e.targets() {
            c.put_mlp(format!("{prefix}.{i}.target"), &t[i]);
        }
    }
}

pub(crate) fn get_critics(c: &Checkpoint, prefix: &str) -> Result<CriticEnsemble> {
    let count = c.u64(&format!("{prefix}.count")).map_err(missing)? as usize;
    let agg_code = c.u64(&format!("{prefix}.aggregation")).map_err(missing)?;
    let aggregation = Aggregation::from_code(agg_code)
        .ok_or_else(|| AgentError::Checkpoint(format!("unknown aggregation {agg_code}")))?;
    let state_dim = c.u64(&format!("{prefix}.state_dim")).map_err(missing)? as usize;
    let has_targets = c.u64(&format!("{prefix}.has_targets")).map_err(missing)? != 0;
    let mut nets = Vec::with_capacity(count);
    let mut opts = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for i in 0..count {
        nets.push(get_mlp(c, &format!("{prefix}.{i}.net"))?);
        opts.push(get_adam(c, &format!("{prefix}.{i}.adam"))?);
        if has_targets {
            targets.push(get_mlp(c, &format!("{prefix}.{i}.target"))?);
        }
    }
    CriticEnsemble::from_parts(nets, opts, has_targets.then_some(targets), aggregation, state_dim)
}

pub(crate) fn put_temperature(c: &mut Checkpoint, prefix: &str, t: &Temperature) {
    let fixed = t.fixed_value();
    c.put_f64(
        format!("{prefix}.values"),
        &[t.log_alpha(), t.target_entropy(), fixed.unwrap_or(0.0)],
    );
    c.put_u64(format!("{prefix}.fixed"), fixed.is_some() as u64);
    put_adam(c, &format!("{prefix}.adam"), t.optimizer());
}

pub(crate) fn get_temperature(c: &Checkpoint, prefix: &str) -> Result<Temperature> {
    let v = c.f64s(&format!("{prefix}.values")).map_err(missing)?;
    if v.len() != 3 {
        return Err(AgentError::Checkpoint(format!("{prefix}.values has {} entries", v.len())));
    }
    let fixed = c.u64(&format!("{prefix}.fixed")).map_err(missing)? != 0;
    let opt = get_adam(c, &format!("{prefix}.adam"))?;
    Ok(Temperature::from_parts(v[0], v[1], fixed.then_some(v[2]), opt))
}
