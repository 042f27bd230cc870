//! The sequential-to-i.i.d. bridge: overlapping n-step segment extraction
//! and a bounded FIFO replay buffer with uniform sampling.
//!
//! Windows overlap (one segment per time step), so in the long run segment
//! start states are distributed like the behavior chain's stationary
//! distribution. That is the premise that makes uniform replay behave like
//! the i.i.d. setting.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::learners::Segment;
use crate::mdp::Transition;

/// Bounded FIFO of fixed-length segments with seeded uniform sampling
/// (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    segment_len: usize,
    segments: VecDeque<Segment>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, segment_len: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        if segment_len == 0 {
            return Err(Error::Config("segment length must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            segment_len,
            segments: VecDeque::with_capacity(capacity.min(1 << 20)),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append a segment, evicting the oldest when full.
    pub fn push(&mut self, seg: Segment) -> Result<()> {
        if seg.len() != self.segment_len {
            return Err(Error::Shape(format!(
                "segment has length {} but the buffer stores length {}",
                seg.len(),
                self.segment_len
            )));
        }
        if self.segments.len() == self.capacity {
            self.segments.pop_front();
        }
        self.segments.push_back(seg);
        Ok(())
    }

    /// Uniform index into the current contents; `None` when empty.
    pub fn sample_index(&mut self) -> Option<usize> {
        if self.segments.is_empty() {
            None
        } else {
            Some(self.rng.random_range(0..self.segments.len()))
        }
    }

    pub fn get(&self, index: usize) -> &Segment {
        &self.segments[index]
    }

    /// `batch` segments sampled uniformly with replacement.
    pub fn sample_iid(&mut self, batch: usize) -> Result<Vec<Segment>> {
        if self.segments.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch)
            .map(|_| {
                let i = self.rng.random_range(0..self.segments.len());
                self.segments[i].clone()
            })
            .collect())
    }
}

/// Overlapping length-n windows of a transition stream, one per time step.
pub fn segment_stream(stream: &[Transition], n: usize) -> Result<Vec<Segment>> {
    if n == 0 {
        return Err(Error::Shape("segment length n must be >= 1".into()));
    }
    if stream.len() < n {
        return Err(Error::Shape(format!(
            "stream of length {} is shorter than n = {n}",
            stream.len()
        )));
    }
    stream.windows(n).map(|w| Segment::new(w.to_vec())).collect()
}
