use nbtrie::Trie;
use nbtrie_bench::prefill::{prefill, prefill_oracle, PREFILL_FACTOR};
use nbtrie_bench::report::write_csv;
use nbtrie_bench::{read_csv, run_counted, run_trial, Row, WorkloadConfig};
use nbtrie_lincheck::mix::Mix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick(mix: Mix, threads: usize, range: u64) -> WorkloadConfig {
    WorkloadConfig {
        threads,
        secs: 0.1,
        range,
        mix,
        trials: 1,
        ..WorkloadConfig::default()
    }
}

// Independent random walk: each step picks a key and a coin for insert or
// delete; the key is present iff its last touch was an insert.
fn simulate_occupancy(range: u64, steps: u64, rng: &mut ChaCha8Rng) -> usize {
    let mut present = vec![false; range as usize];
    for _ in 0..steps {
        let k = rng.gen_range(0..range as usize);
        present[k] = rng.gen_bool(0.5);
    }
    present.iter().filter(|&&p| p).count()
}

fn band(mut sizes: Vec<usize>) -> (usize, usize, usize, usize) {
    sizes.sort_unstable();
    let n = sizes.len();
    (
        sizes[0],
        sizes[n / 1000],
        sizes[n - 1 - n / 1000],
        sizes[n - 1],
    )
}

#[test]
fn prefill_band_for_range_100() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let walk: Vec<usize> = (0..20_000)
        .map(|_| simulate_occupancy(100, 100 * PREFILL_FACTOR, &mut rng))
        .collect();
    let (lo, q_lo, q_hi, hi) = band(walk);
    // occupancy after n = 4R steps is about (1 - e^-4)/2 = 49% with sd ~5
    assert!(
        q_lo >= 30 && q_hi <= 70,
        "walk band [{q_lo}, {q_hi}] (extremes {lo}..{hi})"
    );

    let sizes: Vec<usize> = (0..2000)
        .map(|seed| prefill_oracle(100, seed, 0).len())
        .collect();
    let (lo, _, _, hi) = band(sizes);
    assert!(lo >= 30 && hi <= 70, "prefill sizes {lo}..{hi}");
}

#[test]
fn one_range_of_operations_falls_short_of_half_full() {
    // expected occupancy (1 - e^-1)/2 = 31.6%: many seeds land below 30
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let below = (0..2000)
        .filter(|_| simulate_occupancy(100, 100, &mut rng) < 30)
        .count();
    assert!(below > 400, "{below}");
}

#[test]
fn prefill_is_reproducible_and_matches_oracle() {
    for range in [10, 1000] {
        let trie = Trie::new(64).unwrap();
        assert_eq!(prefill(&trie, range, 5, 0), range * PREFILL_FACTOR);
        let expect: Vec<u64> = prefill_oracle(range, 5, 0).keys().collect();
        assert_eq!(trie.keys(), expect);
        let again = Trie::new(64).unwrap();
        prefill(&again, range, 5, 0);
        assert_eq!(again.keys(), expect);
    }
}

#[test]
fn prefill_off_leaves_only_sentinels() {
    let cfg = WorkloadConfig {
        prefill: false,
        ..quick(Mix::new(0, 0, 0, 100), 1, 100)
    };
    let r = run_trial(&cfg, 0).unwrap();
    assert_eq!(r.final_size, 0);
}

#[test]
fn find_only_has_throughput_and_no_updates() {
    for range in [100, 1_000_000] {
        let r = run_trial(&quick(Mix::new(0, 0, 0, 100), 1, range), 0).unwrap();
        assert!(r.throughput > 0.0);
        assert_eq!(r.counts.updates(), 0);
        assert_eq!(r.counts.succeeded[..3], [0, 0, 0]);
    }
}

#[test]
fn update_only_million_keys_four_threads_passes_audit() {
    let r = run_trial(&quick(Mix::UPDATE_ONLY, 4, 1_000_000), 0).unwrap();
    assert!(r.counts.attempted[0] > 0 && r.counts.attempted[1] > 0);
    assert_eq!(r.instruments.child_cas_violations(), 0);
    assert!(r.backlog <= 64 * 4, "{}", r.backlog);
}

#[test]
fn replace_heavy_parity_holds() {
    for (threads, range, runs) in [
        (1, 100, None),
        (4, 100, None),
        (4, 20, Some(5)),
        (3, 10_000, Some(50)),
    ] {
        let cfg = WorkloadConfig {
            parity: true,
            runs,
            ..quick(Mix::REPLACE_HEAVY, threads, range)
        };
        let r = run_trial(&cfg, 1).unwrap();
        assert!(r.counts.succeeded[2] > 0, "no replace succeeded");
    }
}

#[test]
fn counted_single_thread_runs_are_identical() {
    for mix in [Mix::READ_MOSTLY, Mix::REPLACE_HEAVY] {
        let cfg = WorkloadConfig {
            parity: true,
            ..quick(mix, 1, 1000)
        };
        let a = run_counted(&cfg, 0, 50_000).unwrap();
        let b = run_counted(&cfg, 0, 50_000).unwrap();
        assert_eq!(a, b);
        let other = run_counted(&WorkloadConfig { seed: 2, ..cfg }, 0, 50_000).unwrap();
        assert_ne!(a.per_thread, other.per_thread);
    }
}

#[test]
fn warmup_is_excluded_from_the_window() {
    let cfg = WorkloadConfig {
        warmup: 0.2,
        secs: 0.05,
        ..quick(Mix::READ_MOSTLY, 2, 100)
    };
    let r = run_trial(&cfg, 0).unwrap();
    assert!(r.secs < 0.2, "{}", r.secs);
    assert!(r.throughput > 0.0);
}

#[test]
fn csv_round_trip_is_exact() {
    let mut rows = Vec::new();
    for threads in [1, 2] {
        for trial in 0..2 {
            rows.push(Row::from(
                &run_trial(&quick(Mix::READ_MOSTLY, threads, 100), trial).unwrap(),
            ));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_csv(&path, &rows).unwrap();
    assert_eq!(read_csv(&path).unwrap(), rows);
    let s = nbtrie_bench::summarize(&rows);
    assert_eq!(s.len(), 2);
    assert!(s.iter().all(|c| c.trials == 2 && c.stddev.is_some()));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        WorkloadConfig {
            key_bits: 8,
            range: 255,
            ..WorkloadConfig::default()
        },
        WorkloadConfig {
            threads: 0,
            ..WorkloadConfig::default()
        },
        WorkloadConfig {
            mix: Mix::REPLACE_HEAVY,
            range: 1,
            ..WorkloadConfig::default()
        },
        WorkloadConfig {
            secs: f64::NAN,
            ..WorkloadConfig::default()
        },
    ];
    for cfg in bad {
        let e = run_trial(&cfg, 0).unwrap_err();
        assert!(!e.is_invariant(), "{e}");
    }
    assert!(WorkloadConfig {
        key_bits: 64,
        range: u64::MAX - 1,
        ..WorkloadConfig::default()
    }
    .validate()
    .is_ok());
}
