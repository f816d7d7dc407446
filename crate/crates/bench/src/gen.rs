//! Per-thread operation streams.

use nbtrie_lincheck::history::Call;
use nbtrie_lincheck::mix::{Mix, Pick};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeds stream `stream` of trial `trial`. Streams of one trial are disjoint.
pub fn stream_rng(seed: u64, trial: usize, stream: u64) -> ChaCha8Rng {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(stream);
    rng
}

/// Keys in `1..=range`, either uniform or in runs of consecutive values
/// starting at a uniform point.
#[derive(Clone, Debug)]
pub struct KeyGen {
    range: u64,
    run: u64,
    next: u64,
    left: u64,
}

impl KeyGen {
    pub fn new(range: u64, runs: Option<u64>) -> KeyGen {
        assert!(range >= 1);
        KeyGen {
            range,
            run: runs.unwrap_or(1).clamp(1, range),
            next: 0,
            left: 0,
        }
    }

    pub fn next(&mut self, rng: &mut ChaCha8Rng) -> u64 {
        if self.left == 0 {
            self.next = rng.gen_range(1..=self.range - self.run + 1);
            self.left = self.run;
        }
        let k = self.next;
        self.next += 1;
        self.left -= 1;
        k
    }
}

/// Deterministic operation stream for one worker.
#[derive(Clone, Debug)]
pub struct OpStream {
    rng: ChaCha8Rng,
    keys: KeyGen,
    mix: Mix,
}

impl OpStream {
    pub fn new(rng: ChaCha8Rng, keys: KeyGen, mix: Mix) -> OpStream {
        OpStream { rng, keys, mix }
    }

    pub fn next_call(&mut self) -> Call {
        let v = self.keys.next(&mut self.rng);
        match self.mix.pick(self.rng.gen_range(0..100)) {
            Pick::Insert => Call::Insert(v),
            Pick::Delete => Call::Delete(v),
            Pick::Find => Call::Find(v),
            Pick::Replace => loop {
                let w = self.keys.next(&mut self.rng);
                if w != v {
                    break Call::Replace(v, w);
                }
            },
        }
    }
}

impl Iterator for OpStream {
    type Item = Call;

    fn next(&mut self) -> Option<Call> {
        Some(self.next_call())
    }
}
