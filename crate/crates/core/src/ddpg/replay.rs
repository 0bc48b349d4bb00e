use rand::Rng;

use crate::actuation::{Action, Observation};
use crate::error::{KseError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    /// Episode ended by blow-up: no bootstrapping from `next_obs`.
    pub terminal: bool,
}

/// Fixed-capacity ring; storage grows on demand up to the capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(KseError::InvalidArgument(
                "replay capacity must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
            next: 0,
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
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Items in insertion order, oldest first.
    pub fn iter_ordered(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity {
            0
        } else {
            self.next
        };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// Uniform sample of `batch` distinct indices.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if batch > self.items.len() {
            return Err(KseError::InvalidArgument(format!(
                "batch {batch} exceeds buffer size {}",
                self.items.len()
            )));
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    pub(crate) fn raw_parts(&self) -> (&[Transition], usize) {
        (&self.items, self.next)
    }

    pub(crate) fn from_raw_parts(
        capacity: usize,
        items: Vec<Transition>,
        next: usize,
    ) -> Result<Self> {
        if capacity == 0 || items.len() > capacity || next >= capacity {
            return Err(KseError::Format("inconsistent replay buffer state".into()));
        }
        Ok(Self {
            capacity,
            items,
            next,
        })
    }
}
