use ndarray::{Array1, Array2};
use rand::Rng;

use super::Transition;
use crate::env::Region;

/// Fixed-capacity FIFO store of transitions with flat, contiguous storage.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    obs_dim: usize,
    capacity: usize,
    cursor: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    terminals: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(obs_dim: usize, capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            obs_dim,
            capacity,
            cursor: 0,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminals: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn push(&mut self, t: &Transition) {
        assert_eq!(t.obs.len(), self.obs_dim, "observation width mismatch");
        assert_eq!(t.next_obs.len(), self.obs_dim, "observation width mismatch");
        if self.len() < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.actions.push(t.action);
            self.rewards.push(t.reward);
            self.terminals.push(t.terminal);
        } else {
            let i = self.cursor;
            let span = i * self.obs_dim..(i + 1) * self.obs_dim;
            self.obs[span.clone()].copy_from_slice(&t.obs);
            self.next_obs[span].copy_from_slice(&t.next_obs);
            self.actions[i] = t.action;
            self.rewards[i] = t.reward;
            self.terminals[i] = t.terminal;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// The stored record in slot `i`, as `(obs, action, reward, next_obs, terminal)`.
    pub fn get(&self, i: usize) -> (&[f64], f64, f64, &[f64], bool) {
        let span = i * self.obs_dim..(i + 1) * self.obs_dim;
        (
            &self.obs[span.clone()],
            self.actions[i],
            self.rewards[i],
            &self.next_obs[span],
            self.terminals[i],
        )
    }

    fn write_row(&self, slot: usize, batch: &mut Batch, row: usize) {
        let (obs, action, reward, next_obs, terminal) = self.get(slot);
        batch.obs.row_mut(row).iter_mut().zip(obs).for_each(|(d, s)| *d = *s);
        batch.next_obs.row_mut(row).iter_mut().zip(next_obs).for_each(|(d, s)| *d = *s);
        batch.actions[row] = action;
        batch.rewards[row] = reward;
        batch.terminals[row] = if terminal { 1.0 } else { 0.0 };
    }
}

/// A minibatch in network-ready layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array1<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 where the transition ended the episode by breaking contact.
    pub terminals: Array1<f64>,
    /// Region of the buffer each row came from.
    pub regions: Vec<Region>,
}

impl Batch {
    fn with_capacity(rows: usize, obs_dim: usize) -> Self {
        Self {
            obs: Array2::zeros((rows, obs_dim)),
            actions: Array1::zeros(rows),
            rewards: Array1::zeros(rows),
            next_obs: Array2::zeros((rows, obs_dim)),
            terminals: Array1::zeros(rows),
            regions: Vec::with_capacity(rows),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// One buffer per contact region, indexed by [`Region::index`].
#[derive(Debug, Clone)]
pub struct RegionBuffers {
    pub buffers: [ReplayBuffer; 2],
}

impl RegionBuffers {
    pub fn new(obs_dim: usize, capacity: usize) -> Self {
        Self {
            buffers: [ReplayBuffer::new(obs_dim, capacity), ReplayBuffer::new(obs_dim, capacity)],
        }
    }

    pub fn get(&self, region: Region) -> &ReplayBuffer {
        &self.buffers[region.index()]
    }

    pub fn total_len(&self) -> usize {
        self.buffers[0].len() + self.buffers[1].len()
    }

    /// Appends transitions to the buffer of `region`.
    pub fn store(&mut self, region: Region, transitions: &[Transition]) {
        let buffer = &mut self.buffers[region.index()];
        for t in transitions {
            buffer.push(t);
        }
    }

    /// Task-balanced sample: `batch_size / 2` uniform draws (with replacement)
    /// from each region's buffer, left rows first. `None` until both buffers
    /// hold data.
    pub fn sample_balanced<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Option<Batch> {
        assert!(batch_size % 2 == 0, "balanced batches need an even size");
        if self.buffers.iter().any(ReplayBuffer::is_empty) {
            return None;
        }
        let half = batch_size / 2;
        let mut batch = Batch::with_capacity(batch_size, self.buffers[0].obs_dim);
        for (b, region) in [Region::Left, Region::Right].into_iter().enumerate() {
            let buffer = &self.buffers[b];
            for row in 0..half {
                buffer.write_row(rng.random_range(0..buffer.len()), &mut batch, b * half + row);
                batch.regions.push(region);
            }
        }
        Some(batch)
    }

    /// Samples from a single region's buffer.
    pub fn sample_region<R: Rng + ?Sized>(&self, region: Region, batch_size: usize, rng: &mut R) -> Option<Batch> {
        let buffer = self.get(region);
        if buffer.is_empty() {
            return None;
        }
        let mut batch = Batch::with_capacity(batch_size, buffer.obs_dim);
        for row in 0..batch_size {
            buffer.write_row(rng.random_range(0..buffer.len()), &mut batch, row);
            batch.regions.push(region);
        }
        Some(batch)
    }

    /// Uniform sample over the union of both buffers, as a single replay
    /// buffer would give.
    pub fn sample_union<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Option<Batch> {
        let (left, total) = (self.buffers[0].len(), self.total_len());
        if total == 0 {
            return None;
        }
        let mut batch = Batch::with_capacity(batch_size, self.buffers[0].obs_dim);
        for row in 0..batch_size {
            let i = rng.random_range(0..total);
            if i < left {
                self.buffers[0].write_row(i, &mut batch, row);
                batch.regions.push(Region::Left);
            } else {
                self.buffers[1].write_row(i - left, &mut batch, row);
                batch.regions.push(Region::Right);
            }
        }
        Some(batch)
    }
}
