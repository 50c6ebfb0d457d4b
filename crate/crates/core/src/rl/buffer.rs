//! FIFO experience replay with uniform sampling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Mat;

pub const DEFAULT_CAPACITY: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
}

/// A sampled mini-batch laid out as matrices.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Mat,
    pub action: Mat,
    pub reward: Vec<f64>,
    pub next_obs: Mat,
    pub done: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

/// Ring buffer over flat arrays. Storage grows on demand up to `capacity`;
/// once full, each push overwrites the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    act: Vec<f64>,
    reward: Vec<f64>,
    next_obs: Vec<f64>,
    done: Vec<f64>,
    len: usize,
    /// Slot the next push writes to once the buffer is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            obs: Vec::new(),
            act: Vec::new(),
            reward: Vec::new(),
            next_obs: Vec::new(),
            done: Vec::new(),
            len: 0,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.observation.len() != self.obs_dim
            || t.next_observation.len() != self.obs_dim
            || t.action.len() != self.act_dim
        {
            return Err(Error::Usage(format!(
                "transition shape ({}, {}, {}) does not match buffer ({}, {}, {})",
                t.observation.len(),
                t.action.len(),
                t.next_observation.len(),
                self.obs_dim,
                self.act_dim,
                self.obs_dim
            )));
        }
        if !t.reward.is_finite() {
            return Err(Error::Usage(format!("non-finite reward {}", t.reward)));
        }
        let done = if t.done { 1.0 } else { 0.0 };
        if self.len < self.capacity {
            self.obs.extend_from_slice(&t.observation);
            self.act.extend_from_slice(&t.action);
            self.next_obs.extend_from_slice(&t.next_observation);
            self.reward.push(t.reward);
            self.done.push(done);
            self.len += 1;
        } else {
            let i = self.head;
            let (o, a) = (self.obs_dim, self.act_dim);
            self.obs[i * o..(i + 1) * o].copy_from_slice(&t.observation);
            self.act[i * a..(i + 1) * a].copy_from_slice(&t.action);
            self.next_obs[i * o..(i + 1) * o].copy_from_slice(&t.next_observation);
            self.reward[i] = t.reward;
            self.done[i] = done;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// Storage slot `i` (not age order).
    pub fn get(&self, i: usize) -> Transition {
        assert!(i < self.len, "index {i} out of range for {} entries", self.len);
        let (o, a) = (self.obs_dim, self.act_dim);
        Transition {
            observation: self.obs[i * o..(i + 1) * o].to_vec(),
            action: self.act[i * a..(i + 1) * a].to_vec(),
            reward: self.reward[i],
            next_observation: self.next_obs[i * o..(i + 1) * o].to_vec(),
            done: self.done[i] != 0.0,
        }
    }

    /// Contents from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = Transition> + '_ {
        let start = if self.len < self.capacity { 0 } else { self.head };
        (0..self.len).map(move |j| self.get((start + j) % self.len))
    }

    /// `n` storage indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        assert!(!self.is_empty(), "sampling from an empty buffer");
        (0..n).map(|_| rng.random_range(0..self.len)).collect()
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let (o, a) = (self.obs_dim, self.act_dim);
        let b = indices.len();
        let mut batch = Batch {
            obs: Mat::zeros(b, o),
            action: Mat::zeros(b, a),
            reward: Vec::with_capacity(b),
            next_obs: Mat::zeros(b, o),
            done: Vec::with_capacity(b),
        };
        for (r, &i) in indices.iter().enumerate() {
            batch.obs.row_mut(r).copy_from_slice(&self.obs[i * o..(i + 1) * o]);
            batch.action.row_mut(r).copy_from_slice(&self.act[i * a..(i + 1) * a]);
            batch
                .next_obs
                .row_mut(r)
                .copy_from_slice(&self.next_obs[i * o..(i + 1) * o]);
            batch.reward.push(self.reward[i]);
            batch.done.push(self.done[i]);
        }
        batch
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Batch {
        let idx = self.sample_indices(rng, n);
        self.gather(&idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: f64) -> Transition {
        Transition {
            observation: vec![tag, tag],
            action: vec![tag],
            reward: -tag,
            next_observation: vec![tag + 0.5, tag + 0.5],
            done: false,
        }
    }

    #[test]
    fn fifo_at_capacity() {
        let mut buf = ReplayBuffer::new(2, 2, 1);
        for t in [1.0, 2.0, 3.0] {
            buf.push(&tr(t)).unwrap();
        }
        assert_eq!(buf.len(), 2);
        let tags: Vec<f64> = buf.iter_oldest_first().map(|t| t.action[0]).collect();
        assert_eq!(tags, vec![2.0, 3.0]);
    }

    #[test]
    fn size_tracks_pushes() {
        let mut buf = ReplayBuffer::new(10, 2, 1);
        for n in 1..=7 {
            buf.push(&tr(n as f64)).unwrap();
            assert_eq!(buf.len(), n);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut buf = ReplayBuffer::new(4, 2, 1);
        let mut t = tr(1.0);
        t.action.push(0.0);
        assert!(matches!(buf.push(&t), Err(Error::Usage(_))));
        let mut t = tr(1.0);
        t.reward = f64::NAN;
        assert!(buf.push(&t).is_err());
        assert!(buf.is_empty());
    }

    #[test]
    fn gather_matches_get() {
        let mut buf = ReplayBuffer::new(3, 2, 1);
        for t in 0..5 {
            buf.push(&tr(t as f64)).unwrap();
        }
        let b = buf.gather(&[2, 0]);
        assert_eq!(b.action.data, vec![buf.get(2).action[0], buf.get(0).action[0]]);
        assert_eq!(b.next_obs.row(1), buf.get(0).next_observation.as_slice());
    }

    #[test]
    fn seeded_indices_reproduce() {
        let mut buf = ReplayBuffer::new(100, 2, 1);
        for t in 0..50 {
            buf.push(&tr(t as f64)).unwrap();
        }
        let a = buf.sample_indices(&mut ChaCha8Rng::seed_from_u64(3), 64);
        let b = buf.sample_indices(&mut ChaCha8Rng::seed_from_u64(3), 64);
        assert_eq!(a, b);
        assert!(a.iter().all(|&i| i < 50));
    }
}
