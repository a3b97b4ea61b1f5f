use std::collections::VecDeque;

use rand::Rng;

use super::focal::{ActionKind, FocalState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: FocalState,
    pub action: ActionKind,
    pub reward: f64,
    pub next_state: FocalState,
}

/// Fixed-capacity FIFO experience buffer.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(capacity.min(4096)),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf.iter()
    }

    /// Uniform sample of `n` distinct transitions; `None` when fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<Transition>> {
        if n == 0 || self.buf.len() < n {
            return None;
        }
        Some(
            rand::seq::index::sample(rng, self.buf.len(), n)
                .into_iter()
                .map(|i| self.buf[i])
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tr(i: usize) -> Transition {
        let s = FocalState::new(i, i + 10).unwrap();
        Transition {
            state: s,
            action: ActionKind::Extend,
            reward: i as f64,
            next_state: s,
        }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut m = ReplayMemory::new(3);
        for i in 0..5 {
            m.push(tr(i));
        }
        assert_eq!(m.len(), 3);
        let rewards: Vec<f64> = m.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sample_needs_enough_items() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut m = ReplayMemory::new(10);
        m.push(tr(0));
        assert!(m.sample(2, &mut rng).is_none());
        m.push(tr(1));
        let s = m.sample(2, &mut rng).unwrap();
        assert_ne!(s[0].reward, s[1].reward);
    }
}
