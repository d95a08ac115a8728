use std::collections::{HashSet, VecDeque};

use crate::tx::{Digest, Transaction};

/// FIFO buffer of the `k` most recent transactions a node created or decoded.
#[derive(Clone, Debug)]
pub struct CodingWindow {
    capacity: usize,
    entries: VecDeque<Transaction>,
    seen: HashSet<Digest>,
}

impl CodingWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "coding window capacity must be positive");
        CodingWindow {
            capacity,
            entries: VecDeque::with_capacity(capacity),
            seen: HashSet::new(),
        }
    }

    /// Appends `tx` unless its content was inserted before, evicting the oldest
    /// entry when full. Returns whether the window changed.
    pub fn insert(&mut self, tx: Transaction) -> bool {
        if !self.seen.insert(tx.digest()) {
            return false;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(tx);
        true
    }

    /// Records `digest` as seen without adding anything to the window.
    /// Returns whether it was new.
    pub fn note_seen(&mut self, digest: Digest) -> bool {
        self.seen.insert(digest)
    }

    /// Whether a transaction with this digest was ever inserted.
    pub fn has_seen(&self, digest: &Digest) -> bool {
        self.seen.contains(digest)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<&Transaction> {
        self.entries.get(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.entries.iter()
    }

    pub fn oldest(&self) -> Option<&Transaction> {
        self.entries.front()
    }
}
