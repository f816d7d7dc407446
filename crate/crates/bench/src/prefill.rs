//! Bringing a fresh trie to a roughly half-full steady state.
//!
//! Prefill runs uniformly random inserts and deletes (i50-d50-f0) over the
//! key range. After `n` such operations a key is present exactly when the
//! last operation that touched it was an insert, so the expected occupancy
//! is `(1 - e^(-n/range)) / 2`. With `n = range` that is only about 32% and
//! a range-100 trie lands below 30 keys in roughly a third of seeds, so the
//! operation count is [`PREFILL_FACTOR`] times the range (about 49%).

use nbtrie::batch::{self, BatchOp};
use nbtrie::Trie;
use nbtrie_lincheck::history::Call;
use nbtrie_lincheck::mix::Mix;
use nbtrie_lincheck::oracle::OracleSet;

use crate::gen::{stream_rng, KeyGen, OpStream};

pub const PREFILL_FACTOR: u64 = 4;

const CHUNK: usize = 1 << 16;
const SHARDS: usize = 64;

/// The prefill operation sequence for one trial. Fixed by its arguments.
pub fn prefill_ops(range: u64, seed: u64, trial: usize) -> impl Iterator<Item = BatchOp> {
    let stream = OpStream::new(
        stream_rng(seed, trial, u64::MAX),
        KeyGen::new(range, None),
        Mix::UPDATE_ONLY,
    );
    stream
        .take((range * PREFILL_FACTOR) as usize)
        .map(|c| match c {
            Call::Insert(v) => BatchOp::Insert(v),
            Call::Delete(v) => BatchOp::Delete(v),
            _ => unreachable!("prefill mix has no replace or find"),
        })
}

/// Applies the prefill sequence. Chunks run one after another; within a
/// chunk, operations are sharded by key, so the resulting contents equal
/// those of a sequential run whatever the thread pool does.
pub fn prefill(trie: &Trie, range: u64, seed: u64, trial: usize) -> u64 {
    let mut ops = prefill_ops(range, seed, trial).peekable();
    let mut applied = 0;
    let mut chunk = Vec::with_capacity(CHUNK);
    while ops.peek().is_some() {
        chunk.clear();
        chunk.extend(ops.by_ref().take(CHUNK));
        applied += chunk.len() as u64;
        for r in batch::apply_groups(trie, &batch::shard_by_key(&chunk, SHARDS))
            .into_iter()
            .flatten()
        {
            r.expect("prefill keys are in range");
        }
    }
    applied
}

/// The set a sequential run of the prefill sequence produces.
pub fn prefill_oracle(range: u64, seed: u64, trial: usize) -> OracleSet {
    let mut set = OracleSet::new();
    for op in prefill_ops(range, seed, trial) {
        match op {
            BatchOp::Insert(v) => set.insert(v),
            BatchOp::Delete(v) => set.delete(v),
            _ => unreachable!(),
        };
    }
    set
}
