//! Randomized concurrent workloads that record their history.

use std::sync::Barrier;

use nbtrie::Trie;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::history::{Call, Clock, History, ThreadLog};
use crate::mix::{Mix, Pick};

#[derive(Clone, Debug)]
pub struct WorkloadSpec {
    pub threads: usize,
    pub ops_per_thread: usize,
    /// Keys operations draw from; must not contain the sentinels.
    pub keys: Vec<u64>,
    pub mix: Mix,
    pub seed: u64,
    /// Yield or spin at random points between operations to vary
    /// interleavings. Builds with the core's `chaos` feature also yield
    /// inside operations.
    pub jitter: bool,
}

impl WorkloadSpec {
    /// Operations each thread will issue. Depends only on the spec.
    pub fn plan(&self) -> Vec<Vec<Call>> {
        assert!(!self.keys.is_empty(), "empty key universe");
        assert!(
            self.mix.replace == 0 || self.keys.len() >= 2,
            "replace needs two distinct keys"
        );
        (0..self.threads)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(t as u64);
                (0..self.ops_per_thread)
                    .map(|_| random_call(&mut rng, &self.keys, self.mix))
                    .collect()
            })
            .collect()
    }
}

pub fn random_call(rng: &mut impl Rng, keys: &[u64], mix: Mix) -> Call {
    let v = keys[rng.gen_range(0..keys.len())];
    match mix.pick(rng.gen_range(0..100)) {
        Pick::Insert => Call::Insert(v),
        Pick::Delete => Call::Delete(v),
        Pick::Find => Call::Find(v),
        Pick::Replace => loop {
            let w = keys[rng.gen_range(0..keys.len())];
            if w != v {
                break Call::Replace(v, w);
            }
        },
    }
}

/// Per-mille yield rate inside operations when jitter is requested.
pub const CHAOS_RATE: u32 = 150;

fn jitter(rng: &mut ChaCha8Rng) {
    match rng.gen_range(0..8) {
        0 => std::thread::yield_now(),
        1 => {
            for _ in 0..rng.gen_range(0..200) {
                std::hint::spin_loop();
            }
        }
        _ => {}
    }
}

/// Runs the workload on `trie` from a common start barrier and returns the
/// merged history. Event content is fixed by the spec; the interleaving is not.
pub fn run_workload(trie: &Trie, spec: &WorkloadSpec) -> History {
    if spec.jitter && nbtrie::chaos::yield_rate() == 0 {
        nbtrie::chaos::set_yield_rate(CHAOS_RATE);
    }
    let plan = spec.plan();
    let clock = Clock::new();
    let start = Barrier::new(spec.threads);
    let events = std::thread::scope(|s| {
        let workers: Vec<_> = plan
            .iter()
            .enumerate()
            .map(|(t, calls)| {
                let (clock, start) = (&clock, &start);
                s.spawn(move || {
                    let mut log = ThreadLog::new(clock, t, calls.len());
                    let mut noise = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9);
                    noise.set_stream(t as u64);
                    start.wait();
                    for &call in calls {
                        if spec.jitter {
                            jitter(&mut noise);
                        }
                        log.record(call, || call.run(trie));
                    }
                    log.into_events()
                })
            })
            .collect();
        workers
            .into_iter()
            .flat_map(|w| w.join().expect("workload thread panicked"))
            .collect()
    });
    History::new(events)
}
