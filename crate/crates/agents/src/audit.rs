use std::collections::HashSet;

use dsrl_latent::PolicyMap;

use crate::Result;

fn key(a: &[f64]) -> Vec<u64> {
    a.iter().map(|x| x.to_bits()).collect()
}

/// Records where every `Q^A` query point came from. A query is legitimate if
/// its action is bit-identical to a dataset action, or to the policy's own
/// output at the recorded `(state, noise)` with the noise inside the box.
#[derive(Debug, Clone, Default)]
pub struct QueryAudit {
    dataset: HashSet<Vec<u64>>,
    half_width: f64,
    pub dataset_queries: u64,
    pub decoded_queries: u64,
    pub violations: u64,
    pub first_violation: Option<String>,
}

impl QueryAudit {
    pub fn new<'a>(dataset_actions: impl IntoIterator<Item = &'a [f64]>, half_width: f64) -> Self {
        Self {
            dataset: dataset_actions.into_iter().map(key).collect(),
            half_width,
            ..Self::default()
        }
    }

    fn violation(&mut self, msg: String) {
        self.violations += 1;
        if self.first_violation.is_none() {
            self.first_violation = Some(msg);
        }
    }

    pub fn check_dataset(&mut self, actions: &[f64], n: usize) {
        let d = actions.len() / n.max(1);
        for r in 0..n {
            self.dataset_queries += 1;
            let row = &actions[r * d..(r + 1) * d];
            if !self.dataset.contains(&key(row)) {
                self.violation(format!("action {row:?} is not in the dataset"));
            }
        }
    }

    pub fn check_decoded<P: PolicyMap + ?Sized>(
        &mut self,
        policy: &P,
        states: &[f64],
        noises: &[f64],
        actions: &[f64],
        n: usize,
    ) -> Result<()> {
        let again = policy.decode_batch(states, noises, n)?;
        let ad = actions.len() / n.max(1);
        let ld = noises.len() / n.max(1);
        for r in 0..n {
            self.decoded_queries += 1;
            let w = &noises[r * ld..(r + 1) * ld];
            if w.iter().any(|x| x.abs() > self.half_width) {
                self.violation(format!("latent {w:?} outside the noise box"));
                continue;
            }
            let a = &actions[r * ad..(r + 1) * ad];
            if key(a) != key(&again[r * ad..(r + 1) * ad]) {
                self.violation(format!("action {a:?} is not the policy output"));
            }
        }
        Ok(())
    }
}
