use std::collections::VecDeque;

use rand::Rng;

use crate::affordance::AFFORDANCE_DIM;
use crate::error::{Error, Result};
use crate::sim::Action;

/// Normalized affordance vector, as fed to the networks.
pub type Features = [f64; AFFORDANCE_DIM];

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Features,
    pub a: Action,
    /// Absent for penalty records whose successor is unknown.
    pub s_next: Option<Features>,
    pub r: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BufferTag {
    Safe,
    Collision,
}

/// Bounded FIFO replay store.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    pub tag: BufferTag,
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(tag: BufferTag, capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            tag,
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    /// Appends `t`, evicting the oldest record when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
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

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    fn draw(&self, rng: &mut impl Rng) -> &Transition {
        &self.items[rng.gen_range(0..self.items.len())]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub tag: BufferTag,
    pub t: &'a Transition,
}

#[derive(Debug, Clone)]
pub struct Minibatch<'a> {
    pub samples: Vec<Sample<'a>>,
    /// Set when the collision buffer was empty and the safe buffer filled
    /// the whole batch.
    pub collision_fallback: bool,
}

/// Half the batch from each buffer, uniformly with replacement. With an
/// empty collision buffer the whole batch comes from the safe buffer.
pub fn sample_minibatch<'a>(
    safe: &'a ReplayBuffer,
    collision: &'a ReplayBuffer,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Minibatch<'a>> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::contract(format!("minibatch size {n} must be positive and even")));
    }
    if safe.is_empty() {
        return Err(Error::contract(if collision.is_empty() {
            "both replay buffers are empty"
        } else {
            "safe replay buffer is empty"
        }));
    }
    let mut samples = Vec::with_capacity(n);
    let collision_fallback = collision.is_empty();
    let n_safe = if collision_fallback { n } else { n / 2 };
    for _ in 0..n_safe {
        samples.push(Sample {
            tag: BufferTag::Safe,
            t: safe.draw(rng),
        });
    }
    for _ in n_safe..n {
        samples.push(Sample {
            tag: BufferTag::Collision,
            t: collision.draw(rng),
        });
    }
    Ok(Minibatch {
        samples,
        collision_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(r: f64) -> Transition {
        Transition {
            s: [0.0; AFFORDANCE_DIM],
            a: Action::Maintain,
            s_next: Some([0.0; AFFORDANCE_DIM]),
            r,
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction_is_oldest_first() {
        let mut b = ReplayBuffer::new(BufferTag::Safe, 3);
        for i in 0..5 {
            b.push(tr(-(i as f64)));
        }
        assert_eq!(b.len(), 3);
        let rs: Vec<f64> = b.iter().map(|t| t.r).collect();
        assert_eq!(rs, vec![-2.0, -3.0, -4.0]);
    }

    #[test]
    fn half_and_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut safe = ReplayBuffer::new(BufferTag::Safe, 10);
        let mut coll = ReplayBuffer::new(BufferTag::Collision, 10);
        safe.push(tr(0.0));
        safe.push(tr(-0.5));
        coll.push(tr(-10.0));
        let mb = sample_minibatch(&safe, &coll, 32, &mut rng).unwrap();
        let n_coll = mb.samples.iter().filter(|s| s.tag == BufferTag::Collision).count();
        assert_eq!(n_coll, 16);
        assert!(mb.samples.iter().filter(|s| s.tag == BufferTag::Collision).all(|s| s.t.r == -10.0));
        assert!(!mb.collision_fallback);
    }

    #[test]
    fn empty_collision_buffer_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut safe = ReplayBuffer::new(BufferTag::Safe, 10);
        let coll = ReplayBuffer::new(BufferTag::Collision, 10);
        safe.push(tr(0.0));
        let mb = sample_minibatch(&safe, &coll, 32, &mut rng).unwrap();
        assert_eq!(mb.samples.len(), 32);
        assert!(mb.samples.iter().all(|s| s.tag == BufferTag::Safe));
        assert!(mb.collision_fallback);
    }

    #[test]
    fn empty_buffers_and_odd_sizes_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let safe = ReplayBuffer::new(BufferTag::Safe, 10);
        let coll = ReplayBuffer::new(BufferTag::Collision, 10);
        assert!(sample_minibatch(&safe, &coll, 32, &mut rng).is_err());
        let mut safe = safe;
        safe.push(tr(0.0));
        assert!(sample_minibatch(&safe, &coll, 31, &mut rng).is_err());
    }
}
