use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_len, Error, Result};

/// One `(s, a, s', r, done)` record.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// A minibatch laid out as dense row-major matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub len: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub next_states: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<bool>,
}

impl Batch {
    pub fn from_transitions<'a, I>(transitions: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        let mut iter = transitions.into_iter().peekable();
        let first = iter
            .peek()
            .ok_or_else(|| Error::Usage("a batch needs at least one transition".into()))?;
        let (state_dim, action_dim) = (first.state.len(), first.action.len());
        let mut batch = Batch {
            len: 0,
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            next_states: Vec::new(),
            rewards: Vec::new(),
            terminals: Vec::new(),
        };
        for t in iter {
            ensure_len("transition state", state_dim, t.state.len())?;
            ensure_len("transition next state", state_dim, t.next_state.len())?;
            ensure_len("transition action", action_dim, t.action.len())?;
            batch.states.extend_from_slice(&t.state);
            batch.actions.extend_from_slice(&t.action);
            batch.next_states.extend_from_slice(&t.next_state);
            batch.rewards.push(t.reward);
            batch.terminals.push(t.terminal);
            batch.len += 1;
        }
        Ok(batch)
    }
}

/// Bounded FIFO of transitions with uniform sampling without replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
    rng: ChaCha8Rng,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay buffer capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            storage: VecDeque::with_capacity(capacity.min(1 << 16)),
            rng: ChaCha8Rng::seed_from_u64(seed),
            inserted: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn total_inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    /// Appends, evicting the oldest transition when full.
    pub fn store(&mut self, transition: Transition) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(transition);
        self.inserted += 1;
    }

    /// `n` distinct transitions drawn uniformly.
    pub fn sample(&mut self, n: usize) -> Result<Vec<&Transition>> {
        if n == 0 {
            return Err(Error::Usage("sample size must be positive".into()));
        }
        if self.storage.len() < n {
            return Err(Error::NotReady {
                available: self.storage.len(),
                required: n,
            });
        }
        let picks = rand::seq::index::sample(&mut self.rng, self.storage.len(), n);
        Ok(picks.iter().map(|i| &self.storage[i]).collect())
    }

    pub fn sample_batch(&mut self, n: usize) -> Result<Batch> {
        let picked = self.sample(n)?;
        Batch::from_transitions(picked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: vec![0.0; 3],
            next_state: vec![tag + 1.0],
            reward: -tag,
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(3, 0).unwrap();
        for i in 0..4 {
            buf.store(tr(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let tags: Vec<f64> = buf.iter().map(|t| t.state[0]).collect();
        assert_eq!(tags, vec![1.0, 2.0, 3.0]);
        assert_eq!(buf.total_inserted(), 4);
    }

    #[test]
    fn exhaustive_sample_returns_each_once() {
        let mut buf = ReplayBuffer::new(10, 5).unwrap();
        for i in 0..7 {
            buf.store(tr(i as f64));
        }
        let mut tags: Vec<f64> = buf.sample(7).unwrap().iter().map(|t| t.state[0]).collect();
        tags.sort_by(f64::total_cmp);
        assert_eq!(tags, (0..7).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn underfilled_buffer_is_not_ready() {
        let mut buf = ReplayBuffer::new(10, 5).unwrap();
        buf.store(tr(0.0));
        assert!(matches!(
            buf.sample(2),
            Err(Error::NotReady {
                available: 1,
                required: 2
            })
        ));
    }

    #[test]
    fn single_draws_are_uniform() {
        // Binomial(10^4, 0.1): sigma = sqrt(n p (1 - p)) = 30.
        let mut buf = ReplayBuffer::new(10, 77).unwrap();
        for i in 0..10 {
            buf.store(tr(i as f64));
        }
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            counts[buf.sample(1).unwrap()[0].state[0] as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 1000.0).abs() <= 90.0, "{counts:?}");
        }
    }

    #[test]
    fn size_is_min_of_inserted_and_capacity() {
        let mut buf = ReplayBuffer::new(5, 0).unwrap();
        for i in 0..12 {
            buf.store(tr(i as f64));
            assert_eq!(buf.len(), (i + 1).min(5));
        }
    }

    #[test]
    fn batch_layout() {
        let ts = [tr(1.0), tr(2.0)];
        let b = Batch::from_transitions(&ts).unwrap();
        assert_eq!(b.len, 2);
        assert_eq!(b.states, vec![1.0, 2.0]);
        assert_eq!(b.next_states, vec![2.0, 3.0]);
        assert_eq!(b.actions.len(), 6);
        assert!(matches!(
            Batch::from_transitions(std::iter::empty()),
            Err(Error::Usage(_))
        ));
    }
}
