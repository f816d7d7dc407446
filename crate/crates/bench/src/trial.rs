//! One timed trial: prefill, a shared-trie workload, end-of-trial checks.

use std::sync::atomic::{AtomicU8, Ordering::*};
use std::sync::Barrier;
use std::time::Instant;

use nbtrie::{InstrumentReport, Trie, TrieError, TrieOptions};
use nbtrie_lincheck::audit::{quiescent_audit, AuditError};
use nbtrie_lincheck::history::Call;
use nbtrie_lincheck::mix::Mix;
use thiserror::Error;

use crate::config::{ConfigError, WorkloadConfig};
use crate::gen::{stream_rng, KeyGen, OpStream};
use crate::prefill::prefill;

/// Operation counts indexed insert, delete, replace, find.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub attempted: [u64; 4],
    pub succeeded: [u64; 4],
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.attempted.iter().sum()
    }

    pub fn updates(&self) -> u64 {
        self.attempted[..3].iter().sum()
    }

    fn minus(&self, base: &Counts) -> Counts {
        let mut out = *self;
        for i in 0..4 {
            out.attempted[i] -= base.attempted[i];
            out.succeeded[i] -= base.succeeded[i];
        }
        out
    }

    fn add(&mut self, other: &Counts) {
        for i in 0..4 {
            self.attempted[i] += other.attempted[i];
            self.succeeded[i] += other.succeeded[i];
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub threads: usize,
    pub range: u64,
    pub mix: Mix,
    pub trial: usize,
    /// Operations completed inside the timed window.
    pub counts: Counts,
    pub secs: f64,
    pub throughput: f64,
    /// Keys in the set after the trial.
    pub final_size: usize,
    pub instruments: InstrumentReport,
    /// Retired objects still awaiting reclamation after the final collect.
    pub backlog: u64,
}

impl TrialResult {
    pub fn ops(&self) -> u64 {
        self.counts.total()
    }
}

#[derive(Debug, Error)]
pub enum TrialError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trie(#[from] TrieError),
    #[error("end-of-trial audit failed: {0}")]
    Audit(#[from] AuditError),
    #[error("CAS discipline violated: {0:?}")]
    Discipline(Box<InstrumentReport>),
    #[error("key {key}: started {initial}, net updates {net}, ended {fin}")]
    Parity {
        key: u64,
        initial: u8,
        net: i64,
        fin: u8,
    },
}

impl TrialError {
    /// Whether the failure is a broken invariant rather than a bad request.
    pub fn is_invariant(&self) -> bool {
        !matches!(self, TrialError::Config(_) | TrialError::Trie(_))
    }
}

const WARMUP: u8 = 0;
const MEASURE: u8 = 1;
const STOP: u8 = 2;

struct Worker {
    ops: OpStream,
    counts: Counts,
    // net successful updates per key, when parity is tracked
    net: Vec<i32>,
}

impl Worker {
    fn new(cfg: &WorkloadConfig, trial: usize, thread: usize) -> Worker {
        Worker {
            ops: OpStream::new(
                stream_rng(cfg.seed, trial, thread as u64),
                KeyGen::new(cfg.range, cfg.runs),
                cfg.mix,
            ),
            counts: Counts::default(),
            net: if cfg.parity {
                vec![0; cfg.range as usize + 1]
            } else {
                Vec::new()
            },
        }
    }

    #[inline]
    fn step(&mut self, trie: &Trie) {
        let call = self.ops.next_call();
        let kind = match call {
            Call::Insert(_) => 0,
            Call::Delete(_) => 1,
            Call::Replace(..) => 2,
            Call::Find(_) => 3,
        };
        let ok = call.run(trie);
        self.counts.attempted[kind] += 1;
        if ok {
            self.counts.succeeded[kind] += 1;
            if !self.net.is_empty() {
                match call {
                    Call::Insert(v) => self.net[v as usize] += 1,
                    Call::Delete(v) => self.net[v as usize] -= 1,
                    Call::Replace(a, b) => {
                        self.net[a as usize] -= 1;
                        self.net[b as usize] += 1;
                    }
                    Call::Find(_) => {}
                }
            }
        }
    }
}

fn fresh_trie(cfg: &WorkloadConfig, trial: usize) -> Result<Trie, TrialError> {
    cfg.validate()?;
    let trie = Trie::with_options(TrieOptions {
        width: cfg.key_bits,
        reclamation: true,
    })?;
    if cfg.prefill {
        prefill(&trie, cfg.range, cfg.seed, trial);
    }
    Ok(trie)
}

fn presence(keys: &[u64], range: u64) -> Vec<u8> {
    let mut out = vec![0u8; range as usize + 1];
    for &k in keys {
        out[k as usize] = 1;
    }
    out
}

// Quiescent checks shared by timed and counted runs. Returns the final keys.
fn finish(
    trie: &Trie,
    initial: Option<&[u64]>,
    workers: &[Worker],
    range: u64,
) -> Result<Vec<u64>, TrialError> {
    let report = quiescent_audit(trie)?;
    if let Some(initial) = initial {
        let before = presence(initial, range);
        let after = presence(&report.keys, range);
        for k in 1..=range as usize {
            let net: i64 = workers.iter().map(|w| w.net[k] as i64).sum();
            if before[k] as i64 + net != after[k] as i64 {
                return Err(TrialError::Parity {
                    key: k as u64,
                    initial: before[k],
                    net,
                    fin: after[k],
                });
            }
        }
    }
    Ok(report.keys)
}

fn discipline(trie: &Trie) -> Result<InstrumentReport, TrialError> {
    let r = trie.instruments();
    if r.child_cas_violations() + r.flag_violations() + r.search_over_width > 0 {
        return Err(TrialError::Discipline(Box::new(r)));
    }
    Ok(r)
}

/// Runs trial number `trial` of `cfg` on a fresh trie.
pub fn run_trial(cfg: &WorkloadConfig, trial: usize) -> Result<TrialResult, TrialError> {
    let trie = fresh_trie(cfg, trial)?;
    let initial = cfg.parity.then(|| trie.keys());
    let phase = AtomicU8::new(if cfg.warmup > 0.0 { WARMUP } else { MEASURE });
    let start = Barrier::new(cfg.threads + 1);

    let (workers, window, secs) = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|t| {
                let (trie, phase, start) = (&trie, &phase, &start);
                s.spawn(move || {
                    let mut w = Worker::new(cfg, trial, t);
                    let mut base = Counts::default();
                    let mut seen = phase.load(Relaxed);
                    start.wait();
                    loop {
                        let now = phase.load(Relaxed);
                        if now != seen {
                            if now >= MEASURE && seen == WARMUP {
                                base = w.counts;
                            }
                            if now == STOP {
                                break;
                            }
                            seen = now;
                        }
                        w.step(trie);
                    }
                    let window = w.counts.minus(&base);
                    (w, window)
                })
            })
            .collect();
        start.wait();
        if cfg.warmup > 0.0 {
            std::thread::sleep(cfg.warmup_window());
            phase.store(MEASURE, Relaxed);
        }
        let t0 = Instant::now();
        std::thread::sleep(cfg.window());
        phase.store(STOP, Relaxed);
        let secs = t0.elapsed().as_secs_f64();
        let mut workers = Vec::new();
        let mut window = Counts::default();
        // join explicitly so thread-exit reclamation has run before the audit
        for h in handles {
            let (w, c) = h.join().expect("worker panicked");
            window.add(&c);
            workers.push(w);
        }
        (workers, window, secs)
    });

    let keys = finish(&trie, initial.as_deref(), &workers, cfg.range)?;
    trie.collect();
    let instruments = discipline(&trie)?;
    Ok(TrialResult {
        threads: cfg.threads,
        range: cfg.range,
        mix: cfg.mix,
        trial,
        counts: window,
        secs,
        throughput: if secs > 0.0 {
            window.total() as f64 / secs
        } else {
            0.0
        },
        final_size: keys.len(),
        instruments,
        backlog: trie.reclaim_stats().backlog(),
    })
}

/// Result of an untimed run of a fixed number of operations per thread.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountedRun {
    pub per_thread: Vec<Counts>,
    pub keys: Vec<u64>,
}

/// Runs exactly `ops` operations per thread with the same streams a timed
/// trial would use, then applies the end-of-trial checks.
pub fn run_counted(cfg: &WorkloadConfig, trial: usize, ops: u64) -> Result<CountedRun, TrialError> {
    let trie = fresh_trie(cfg, trial)?;
    let initial = cfg.parity.then(|| trie.keys());
    let start = Barrier::new(cfg.threads);
    let workers: Vec<Worker> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|t| {
                let (trie, start) = (&trie, &start);
                s.spawn(move || {
                    let mut w = Worker::new(cfg, trial, t);
                    start.wait();
                    for _ in 0..ops {
                        w.step(trie);
                    }
                    w
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let keys = finish(&trie, initial.as_deref(), &workers, cfg.range)?;
    trie.collect();
    discipline(&trie)?;
    Ok(CountedRun {
        per_thread: workers.iter().map(|w| w.counts).collect(),
        keys,
    })
}
