use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("{what} has dimension {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("policy server error: {0}")]
    Remote(String),
    #[error("policy query timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
}

/// The deterministic map from `(state, latent noise)` to an action chunk.
///
/// This is the only access to a generative policy that steering code gets.
/// Actions are returned flattened: `chunk_len` consecutive actions of
/// `action_dim` components each.
pub trait PolicyMap: Send + Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn chunk_len(&self) -> usize;

    fn latent_dim(&self) -> usize {
        self.action_dim() * self.chunk_len()
    }

    fn decode(&self, state: &[f64], noise: &[f64]) -> Result<Vec<f64>, QueryError>;

    /// Decodes `n` rows; `states` is `n x state_dim`, `noises` is `n x latent_dim`.
    fn decode_batch(&self, states: &[f64], noises: &[f64], n: usize) -> Result<Vec<f64>, QueryError> {
        let (sd, ld) = (self.state_dim(), self.latent_dim());
        check_batch(states, noises, n, sd, ld)?;
        let mut out = Vec::with_capacity(n * ld);
        for i in 0..n {
            out.extend(self.decode(&states[i * sd..(i + 1) * sd], &noises[i * ld..(i + 1) * ld])?);
        }
        Ok(out)
    }
}

pub(crate) fn check_batch(states: &[f64], noises: &[f64], n: usize, sd: usize, ld: usize) -> Result<(), QueryError> {
    if states.len() != n * sd {
        return Err(QueryError::Dimension {
            what: "state batch",
            expected: n * sd,
            got: states.len(),
        });
    }
    if noises.len() != n * ld {
        return Err(QueryError::Dimension {
            what: "noise batch",
            expected: n * ld,
            got: noises.len(),
        });
    }
    Ok(())
}

macro_rules! forward_policy_map {
    ($ty:ty) => {
        impl<P: PolicyMap + ?Sized> PolicyMap for $ty {
            fn state_dim(&self) -> usize {
                (**self).state_dim()
            }
            fn action_dim(&self) -> usize {
                (**self).action_dim()
            }
            fn chunk_len(&self) -> usize {
                (**self).chunk_len()
            }
            fn latent_dim(&self) -> usize {
                (**self).latent_dim()
            }
            fn decode(&self, state: &[f64], noise: &[f64]) -> Result<Vec<f64>, QueryError> {
                (**self).decode(state, noise)
            }
            fn decode_batch(&self, states: &[f64], noises: &[f64], n: usize) -> Result<Vec<f64>, QueryError> {
                (**self).decode_batch(states, noises, n)
            }
        }
    };
}

forward_policy_map!(&P);
forward_policy_map!(Box<P>);
forward_policy_map!(Arc<P>);
