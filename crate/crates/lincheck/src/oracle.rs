//! The sequential specification: a sorted set with an atomic replace.

use std::collections::BTreeSet;

use crate::history::Call;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct OracleSet {
    keys: BTreeSet<u64>,
}

impl OracleSet {
    pub fn new() -> OracleSet {
        OracleSet::default()
    }

    pub fn contains(&self, v: u64) -> bool {
        self.keys.contains(&v)
    }

    pub fn insert(&mut self, v: u64) -> bool {
        self.keys.insert(v)
    }

    pub fn delete(&mut self, v: u64) -> bool {
        self.keys.remove(&v)
    }

    /// Removes `old` and adds `new` in one step, only if `old` is present
    /// and `new` absent.
    pub fn replace(&mut self, old: u64, new: u64) -> bool {
        if self.keys.contains(&old) && !self.keys.contains(&new) {
            self.keys.remove(&old);
            self.keys.insert(new);
            true
        } else {
            false
        }
    }

    pub fn apply(&mut self, call: Call) -> bool {
        match call {
            Call::Insert(v) => self.insert(v),
            Call::Delete(v) => self.delete(v),
            Call::Replace(a, b) => self.replace(a, b),
            Call::Find(v) => self.contains(v),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.keys.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}
