//! Fixed-capacity experience store with FIFO eviction and uniform
//! with-replacement sampling.

use rand::Rng;

use crate::error::{Error, Result};

/// One environment interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
}

/// Ring buffer of transitions: once full, each push overwrites the oldest
/// entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            items: Vec::new(),
            capacity,
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Uniform sample with replacement; `None` until the buffer holds at
    /// least `batch` transitions, signalling the caller to skip the update.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if batch == 0 || self.items.len() < batch {
            return None;
        }
        Some(
            (0..batch)
                .map(|_| &self.items[rng.random_range(0..self.items.len())])
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn t(tag: f64) -> Transition {
        Transition {
            s: vec![tag],
            a: vec![0.0],
            r: tag,
            s_next: vec![tag + 0.5],
        }
    }

    #[test]
    fn zero_capacity_is_rejected() {
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn eviction_is_fifo_at_capacity() {
        let mut buf = ReplayBuffer::new(2).unwrap();
        buf.push(t(1.0));
        buf.push(t(2.0));
        assert_eq!(buf.len(), 2);
        buf.push(t(3.0));
        assert_eq!(buf.len(), 2, "capacity is a hard ceiling");

        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut seen = [false; 4];
        for _ in 0..200 {
            for s in buf.sample(2, &mut rng).unwrap() {
                seen[s.r as usize] = true;
            }
        }
        assert!(!seen[1], "the oldest entry is gone");
        assert!(seen[2] && seen[3], "newer entries remain");
    }

    #[test]
    fn wraparound_keeps_evicting_in_arrival_order() {
        let mut buf = ReplayBuffer::new(3);
        let buf = buf.as_mut().unwrap();
        for i in 0..7 {
            buf.push(t(i as f64));
        }
        // Pushes 0..6 into capacity 3: survivors are 4, 5, 6.
        let rewards: Vec<f64> = {
            let mut rng = ChaCha12Rng::seed_from_u64(1);
            let mut got: Vec<f64> = (0..300)
                .flat_map(|_| {
                    buf.sample(3, &mut rng)
                        .unwrap()
                        .iter()
                        .map(|t| t.r)
                        .collect::<Vec<_>>()
                })
                .collect();
            got.sort_by(f64::total_cmp);
            got.dedup();
            got
        };
        assert_eq!(rewards, vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn sampling_underfilled_buffer_returns_none() {
        let mut buf = ReplayBuffer::new(8).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        assert!(buf.sample(1, &mut rng).is_none());
        buf.push(t(0.0));
        assert!(buf.sample(2, &mut rng).is_none());
        assert!(buf.sample(1, &mut rng).is_some());
        assert!(buf.sample(0, &mut rng).is_none(), "empty batches are refused");
    }

    #[test]
    fn sampling_is_uniform_with_replacement() {
        let mut buf = ReplayBuffer::new(4).unwrap();
        for i in 0..4 {
            buf.push(t(i as f64));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            counts[buf.sample(1, &mut rng).unwrap()[0].r as usize] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.25).abs() < 0.01, "index frequency {freq}");
        }

        // With replacement: a full-size batch eventually holds duplicates.
        let mut saw_duplicate = false;
        for _ in 0..50 {
            let batch = buf.sample(4, &mut rng).unwrap();
            let mut rs: Vec<f64> = batch.iter().map(|t| t.r).collect();
            rs.sort_by(f64::total_cmp);
            rs.dedup();
            saw_duplicate |= rs.len() < 4;
        }
        assert!(saw_duplicate);
    }
}
