use std::sync::Arc;

use dsrl_endpoint::{ClientConfig, RemoteClient};
use dsrl_envs::{BanditEnv, EnvId, PointMassEnv};
use dsrl_latent::{Env, PolicyMap};
use dsrl_policy::{FlowPolicy, GenerativePolicy};

use crate::{EnvConfig, HarnessError, PolicyConfig};

/// Builds the environment described by `cfg`, seeded for its initial states.
pub fn make_env(cfg: &EnvConfig, seed: u64) -> Box<dyn Env> {
    match cfg {
        EnvConfig::PointMass { .. } => Box::new(PointMassEnv::new(
            cfg.point_mass_config().expect("point-mass config"),
            seed,
        )),
        EnvConfig::Bandit {
            target,
            low,
            high,
            success_radius,
        } => Box::new(BanditEnv::new(target.clone(), *low, *high, *success_radius)),
    }
}

pub fn env_id(cfg: &EnvConfig) -> EnvId {
    match cfg {
        EnvConfig::PointMass { .. } => EnvId::PointMass,
        EnvConfig::Bandit { .. } => EnvId::Bandit,
    }
}

/// Opens the policy named by `cfg` and checks it against the environment.
pub fn load_policy(cfg: &PolicyConfig, env: &EnvConfig) -> Result<Arc<dyn PolicyMap>, HarnessError> {
    let probe = make_env(env, 0);
    let (sd, ad) = (probe.state_dim(), probe.action_dim());
    let policy: Arc<dyn PolicyMap> = if let Some(path) = &cfg.checkpoint {
        Arc::new(GenerativePolicy::load(path)?)
    } else if let Some(addr) = &cfg.remote {
        let mut c = ClientConfig::new(sd, ad, cfg.remote_chunk_len);
        c.timeout = cfg.timeout();
        Arc::new(RemoteClient::connect(addr.as_str(), c)?)
    } else if cfg.identity {
        Arc::new(GenerativePolicy::Flow(FlowPolicy::identity(
            sd,
            &probe.action_low(),
            &probe.action_high(),
            1,
        )?))
    } else {
        return Err(HarnessError::Config("no policy source configured".into()));
    };
    check_dims(policy.as_ref(), probe.as_ref())?;
    Ok(policy)
}

pub fn check_dims(policy: &dyn PolicyMap, env: &dyn Env) -> Result<(), HarnessError> {
    if policy.state_dim() != env.state_dim() {
        return Err(HarnessError::Mismatch {
            what: "state dimension",
            policy: policy.state_dim(),
            env: env.state_dim(),
        });
    }
    if policy.action_dim() != env.action_dim() {
        return Err(HarnessError::Mismatch {
            what: "action dimension",
            policy: policy.action_dim(),
            env: env.action_dim(),
        });
    }
    Ok(())
}
