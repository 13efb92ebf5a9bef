//! Transition storage: FIFO ring buffer (default) and a
//! global-distribution-matching buffer realized as classical reservoir
//! sampling, with uniform minibatch sampling (with replacement).

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::CoreError;

/// One environment step. `terminal` is true only for genuine MDP
/// termination, never horizon truncation, so bootstrapped targets stay
/// correct. Discrete actions are stored as a single-element vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub terminal: bool,
    /// Oracle's suggested action at `s`; empty when no oracle is configured.
    pub oracle_a: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferMode {
    Fifo,
    /// Global distribution matching: uniform-over-stream retention via
    /// reservoir sampling.
    Gdm,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    mode: BufferMode,
    items: Vec<Transition>,
    /// FIFO write cursor.
    head: usize,
    total_seen: u64,
    obs_dim: usize,
    act_dim: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, mode: BufferMode, obs_dim: usize, act_dim: usize) -> Result<Self, CoreError> {
        if capacity == 0 {
            return Err(CoreError::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            mode,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            total_seen: 0,
            obs_dim,
            act_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_seen(&self) -> u64 {
        self.total_seen
    }

    fn check_dims(&self, t: &Transition) -> Result<(), CoreError> {
        if t.s.len() != self.obs_dim || t.s_next.len() != self.obs_dim {
            return Err(CoreError::Shape(format!(
                "transition observation dims ({}, {}) do not match buffer obs_dim {}",
                t.s.len(),
                t.s_next.len(),
                self.obs_dim
            )));
        }
        if t.a.len() != self.act_dim {
            return Err(CoreError::Shape(format!(
                "transition action dim {} does not match buffer act_dim {}",
                t.a.len(),
                self.act_dim
            )));
        }
        if !t.oracle_a.is_empty() && t.oracle_a.len() != self.act_dim {
            return Err(CoreError::Shape(format!(
                "oracle action dim {} does not match buffer act_dim {}",
                t.oracle_a.len(),
                self.act_dim
            )));
        }
        Ok(())
    }

    /// FIFO: overwrite the oldest slot when full. GDM: algorithm-R reservoir
    /// update — once full, item number N replaces a uniform slot with
    /// probability capacity/N and is otherwise discarded.
    pub fn push<R: Rng + ?Sized>(&mut self, t: Transition, rng: &mut R) -> Result<(), CoreError> {
        self.check_dims(&t)?;
        self.total_seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(t);
            return Ok(());
        }
        match self.mode {
            BufferMode::Fifo => {
                self.items[self.head] = t;
                self.head = (self.head + 1) % self.capacity;
            }
            BufferMode::Gdm => {
                let j = rng.gen_range(0..self.total_seen);
                if (j as usize) < self.capacity {
                    self.items[j as usize] = t;
                }
            }
        }
        Ok(())
    }

    /// I.i.d. uniform sampling with replacement over stored items.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<Transition>, CoreError> {
        if self.items.is_empty() {
            return Err(CoreError::WarmupIncomplete { stored: 0, requested: batch_size });
        }
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let i = rng.gen_range(0..self.items.len());
            batch.push(self.items[i].clone());
        }
        Ok(batch)
    }

    /// In-order view of stored items (test support).
    pub fn items(&self) -> &[Transition] {
        &self.items
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use alloc::vec;

    fn t(tag: f64) -> Transition {
        Transition { s: vec![tag], a: vec![tag], r: tag, s_next: vec![tag], terminal: false, oracle_a: vec![] }
    }

    #[test]
    fn fifo_evicts_oldest() {
        let mut rng = stream_rng(0, Stream::Buffer);
        let mut buf = ReplayBuffer::new(2, BufferMode::Fifo, 1, 1).unwrap();
        for i in 0..3 {
            buf.push(t(i as f64), &mut rng).unwrap();
        }
        let tags: Vec<f64> = buf.items().iter().map(|x| x.r).collect();
        assert_eq!(buf.len(), 2);
        assert!(tags.contains(&1.0) && tags.contains(&2.0) && !tags.contains(&0.0));
    }

    #[test]
    fn fifo_holds_last_capacity_items_after_many_pushes() {
        let mut rng = stream_rng(0, Stream::Buffer);
        let cap = 8;
        let mut buf = ReplayBuffer::new(cap, BufferMode::Fifo, 1, 1).unwrap();
        for i in 0..50 {
            buf.push(t(i as f64), &mut rng).unwrap();
        }
        let mut tags: Vec<f64> = buf.items().iter().map(|x| x.r).collect();
        tags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<f64> = (42..50).map(|i| i as f64).collect();
        assert_eq!(tags, expected);
    }

    #[test]
    fn gdm_retains_everything_below_capacity() {
        let mut rng = stream_rng(1, Stream::Buffer);
        let mut buf = ReplayBuffer::new(100, BufferMode::Gdm, 1, 1).unwrap();
        for i in 0..100 {
            buf.push(t(i as f64), &mut rng).unwrap();
        }
        assert_eq!(buf.len(), 100);
        let mut tags: Vec<f64> = buf.items().iter().map(|x| x.r).collect();
        tags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(tags, (0..100).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn sample_of_single_item_buffer_repeats_it() {
        let mut rng = stream_rng(2, Stream::Buffer);
        let mut buf = ReplayBuffer::new(4, BufferMode::Fifo, 1, 1).unwrap();
        let empty = buf.sample(4, &mut rng);
        assert!(matches!(empty, Err(CoreError::WarmupIncomplete { .. })));
        buf.push(t(7.0), &mut rng).unwrap();
        // sampling is with replacement: one stored item serves any batch size
        let batch = buf.sample(4, &mut rng).unwrap();
        assert_eq!(batch, alloc::vec![t(7.0); 4]);
    }

    #[test]
    fn underfilled_buffer_reports_warmup_incomplete() {
        let mut rng = stream_rng(3, Stream::Buffer);
        let buf = ReplayBuffer::new(4, BufferMode::Fifo, 1, 1).unwrap();
        match buf.sample(2, &mut rng) {
            Err(CoreError::WarmupIncomplete { stored: 0, requested: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = stream_rng(4, Stream::Buffer);
        let mut buf = ReplayBuffer::new(4, BufferMode::Fifo, 2, 1).unwrap();
        assert!(matches!(buf.push(t(0.0), &mut rng), Err(CoreError::Shape(_))));
    }

    #[test]
    fn sampled_transitions_bitwise_equal_stored() {
        let mut rng = stream_rng(5, Stream::Buffer);
        let mut buf = ReplayBuffer::new(16, BufferMode::Fifo, 1, 1).unwrap();
        for i in 0..16 {
            buf.push(t(i as f64 * 0.3), &mut rng).unwrap();
        }
        let batch = buf.sample(64, &mut rng).unwrap();
        for item in batch {
            assert!(buf.items().iter().any(|x| *x == item));
        }
    }
}
