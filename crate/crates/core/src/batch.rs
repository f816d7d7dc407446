//! Bulk application of set operations.
//!
//! With the `parallel` feature the batch is spread over the rayon pool;
//! without it (or through the `_seq` variants) it runs in order on the
//! calling thread. Either way each result is the one the trie returned for
//! that operation. The parallel variants leave no retired objects stranded
//! in idle pool threads: a later `Trie::collect` can free all of them.

use crate::error::TrieError;
use crate::trie::Trie;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BatchOp {
    Insert(u64),
    Delete(u64),
    Replace(u64, u64),
    Find(u64),
}

impl BatchOp {
    pub fn apply(self, trie: &Trie) -> Result<bool, TrieError> {
        match self {
            BatchOp::Insert(v) => trie.insert(v),
            BatchOp::Delete(v) => trie.delete(v),
            BatchOp::Replace(a, b) => trie.replace(a, b),
            BatchOp::Find(v) => trie.find(v),
        }
    }
}

pub fn apply_seq(trie: &Trie, ops: &[BatchOp]) -> Vec<Result<bool, TrieError>> {
    ops.iter().map(|op| op.apply(trie)).collect()
}

/// Applies each group in order; groups run independently of one another.
/// When no key occurs in two groups the final contents are deterministic.
pub fn apply_groups_seq(trie: &Trie, groups: &[Vec<BatchOp>]) -> Vec<Vec<Result<bool, TrieError>>> {
    groups.iter().map(|g| apply_seq(trie, g)).collect()
}

#[cfg(feature = "parallel")]
pub fn apply_par(trie: &Trie, ops: &[BatchOp]) -> Vec<Result<bool, TrieError>> {
    use rayon::prelude::*;
    let out = ops.par_iter().map(|op| op.apply(trie)).collect();
    rayon::broadcast(|_| trie.flush_local());
    out
}

#[cfg(feature = "parallel")]
pub fn apply_groups_par(trie: &Trie, groups: &[Vec<BatchOp>]) -> Vec<Vec<Result<bool, TrieError>>> {
    use rayon::prelude::*;
    let out = groups.par_iter().map(|g| apply_seq(trie, g)).collect();
    rayon::broadcast(|_| trie.flush_local());
    out
}

pub fn apply(trie: &Trie, ops: &[BatchOp]) -> Vec<Result<bool, TrieError>> {
    #[cfg(feature = "parallel")]
    return apply_par(trie, ops);
    #[cfg(not(feature = "parallel"))]
    return apply_seq(trie, ops);
}

pub fn apply_groups(trie: &Trie, groups: &[Vec<BatchOp>]) -> Vec<Vec<Result<bool, TrieError>>> {
    #[cfg(feature = "parallel")]
    return apply_groups_par(trie, groups);
    #[cfg(not(feature = "parallel"))]
    return apply_groups_seq(trie, groups);
}

/// Splits `ops` into `shards` groups by key so that every operation on a
/// given key lands in the same group, preserving order within a group.
/// Replace operations go to the shard of their first key.
pub fn shard_by_key(ops: &[BatchOp], shards: usize) -> Vec<Vec<BatchOp>> {
    let shards = shards.max(1);
    let mut out = vec![Vec::new(); shards];
    for &op in ops {
        let k = match op {
            BatchOp::Insert(v) | BatchOp::Delete(v) | BatchOp::Find(v) | BatchOp::Replace(v, _) => {
                v
            }
        };
        out[(k % shards as u64) as usize].push(op);
    }
    out
}
