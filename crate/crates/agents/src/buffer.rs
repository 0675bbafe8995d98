use std::sync::{Arc, Mutex};

use rand::Rng;

use crate::error::dim;
use crate::{AgentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Offline,
    Online,
}

/// One (possibly chunked) transition. `discount` is the bootstrap factor
/// applied to the next-state value, `gamma^k` for `k` executed raw steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub latent: Option<Vec<f64>>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub discount: f64,
    pub origin: Origin,
}

/// Row-major sampled batch. `dones` holds 1.0 for terminal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub len: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub latents: Option<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub dones: Vec<f64>,
    pub discounts: Vec<f64>,
}

impl Batch {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a Record>) -> Result<Self> {
        let mut b = Batch {
            len: 0,
            states: Vec::new(),
            actions: Vec::new(),
            latents: Some(Vec::new()),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            discounts: Vec::new(),
        };
        for r in records {
            b.len += 1;
            b.states.extend_from_slice(&r.state);
            b.actions.extend_from_slice(&r.action);
            match (&mut b.latents, &r.latent) {
                (Some(l), Some(w)) => l.extend_from_slice(w),
                (l, _) => *l = None,
            }
            b.rewards.push(r.reward);
            b.next_states.extend_from_slice(&r.next_state);
            b.dones.push(if r.done { 1.0 } else { 0.0 });
            b.discounts.push(r.discount);
        }
        if b.len == 0 {
            return Err(AgentError::EmptyBatch);
        }
        Ok(b)
    }

    pub fn latents(&self) -> Result<&[f64]> {
        self.latents.as_deref().ok_or(AgentError::MissingLatent)
    }
}

/// Fixed-capacity ring of transitions with uniform sampling, plus an
/// optional stratified mode that draws half of each batch from each origin.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    latent_dim: usize,
    records: Vec<Record>,
    next: usize,
    /// Slot indices grouped by origin, with each slot's position in its group.
    groups: [Vec<usize>; 2],
    group_pos: Vec<usize>,
    appended: u64,
}

fn group(origin: Origin) -> usize {
    match origin {
        Origin::Offline => 0,
        Origin::Online => 1,
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize, latent_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            state_dim,
            action_dim,
            latent_dim,
            records: Vec::with_capacity(capacity.min(1 << 20)),
            next: 0,
            groups: [Vec::new(), Vec::new()],
            group_pos: Vec::new(),
            appended: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, origin: Origin) -> usize {
        self.groups[group(origin)].len()
    }

    /// Total appends since construction, overwritten ones included.
    pub fn appended(&self) -> u64 {
        self.appended
    }

    pub fn get(&self, slot: usize) -> Option<&Record> {
        self.records.get(slot)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn push(&mut self, record: Record) -> Result<()> {
        if record.state.len() != self.state_dim || record.next_state.len() != self.state_dim {
            return Err(dim("record state", self.state_dim, record.state.len()));
        }
        if record.action.len() != self.action_dim {
            return Err(dim("record action", self.action_dim, record.action.len()));
        }
        if let Some(w) = &record.latent {
            if w.len() != self.latent_dim {
                return Err(dim("record latent", self.latent_dim, w.len()));
            }
        }
        let slot = self.next;
        let g = group(record.origin);
        if slot < self.records.len() {
            let old = group(self.records[slot].origin);
            let pos = self.group_pos[slot];
            self.groups[old].swap_remove(pos);
            if let Some(&moved) = self.groups[old].get(pos) {
                self.group_pos[moved] = pos;
            }
            self.records[slot] = record;
            self.group_pos[slot] = self.groups[g].len();
        } else {
            self.records.push(record);
            self.group_pos.push(self.groups[g].len());
        }
        self.groups[g].push(slot);
        self.next = (slot + 1) % self.capacity;
        self.appended += 1;
        Ok(())
    }

    /// Uniform slot indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(AgentError::EmptyBuffer);
        }
        Ok((0..n).map(|_| rng.random_range(0..self.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(n, rng)?;
        Batch::from_records(idx.iter().map(|&i| &self.records[i]))
    }

    /// Half the rows from offline slots and half from online slots; falls
    /// back to uniform when either group is empty.
    pub fn sample_stratified<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        let [off, on] = &self.groups;
        if off.is_empty() || on.is_empty() {
            return self.sample(n, rng);
        }
        let half = n / 2;
        let mut idx: Vec<usize> = (0..half).map(|_| off[rng.random_range(0..off.len())]).collect();
        idx.extend((half..n).map(|_| on[rng.random_range(0..on.len())]));
        Batch::from_records(idx.iter().map(|&i| &self.records[i]))
    }
}

/// A replay buffer behind a mutex so collectors can append while the
/// learner samples.
#[derive(Debug, Clone)]
pub struct SharedReplayBuffer {
    inner: Arc<Mutex<ReplayBuffer>>,
}

impl SharedReplayBuffer {
    pub fn new(buffer: ReplayBuffer) -> Self {
        Self {
            inner: Arc::new(Mutex::new(buffer)),
        }
    }

    pub fn push(&self, record: Record) -> Result<()> {
        self.lock().push(record)
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, stratified: bool, rng: &mut R) -> Result<Batch> {
        let buf = self.lock();
        if stratified {
            buf.sample_stratified(n, rng)
        } else {
            buf.sample(n, rng)
        }
    }

    pub fn lock(&self) -> std::sync::MutexGuard<'_, ReplayBuffer> {
        // a panicking collector cannot leave a record half-written: push
        // validates before mutating
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}
