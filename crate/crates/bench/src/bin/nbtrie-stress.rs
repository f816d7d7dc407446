//! Concurrent stress run meant for memory checkers such as valgrind:
//! rounds of mixed updates on one shared trie with a quiescent audit and a
//! reclamation backlog check after each, then a short linearizability
//! campaign. Exits 1 on the first failed check.

use std::process::ExitCode;

use clap::Parser;
use nbtrie::{Trie, TrieOptions};
use nbtrie_bench::gen::{stream_rng, KeyGen, OpStream};
use nbtrie_lincheck::audit::{quiescent_audit, ReachabilityTracker};
use nbtrie_lincheck::campaign::{run_campaign, CampaignSpec};
use nbtrie_lincheck::mix::Mix;

#[derive(Debug, Parser)]
#[command(name = "nbtrie-stress")]
struct Args {
    #[arg(long, default_value_t = 4)]
    threads: usize,
    #[arg(long, default_value_t = 12)]
    rounds: usize,
    /// Operations per thread per round.
    #[arg(long, default_value_t = 1500)]
    ops: u64,
    #[arg(long, default_value_t = 10)]
    key_bits: u8,
    #[arg(long, default_value_t = 200)]
    range: u64,
    /// Histories in the closing linearizability campaign.
    #[arg(long, default_value_t = 100)]
    histories: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Per-mille yield rate inside operations (builds with chaos points only).
    #[arg(long, default_value_t = 20)]
    chaos: u32,
}

const MIXES: [Mix; 4] = [
    Mix::UPDATE_ONLY,
    Mix::REPLACE_HEAVY,
    Mix::READ_MOSTLY,
    Mix::new(25, 25, 40, 10),
];

fn main() -> ExitCode {
    let args = Args::parse();
    nbtrie::chaos::set_yield_rate(args.chaos);
    let trie = Trie::with_options(TrieOptions {
        width: args.key_bits,
        reclamation: true,
    })
    .expect("valid key width");
    let mut tracker = ReachabilityTracker::new();
    let mut max_backlog = 0;
    let bound = 64 * args.threads as u64;

    for round in 0..args.rounds {
        let mix = MIXES[round % MIXES.len()];
        std::thread::scope(|s| {
            let workers: Vec<_> = (0..args.threads)
                .map(|t| {
                    let trie = &trie;
                    let mut ops = OpStream::new(
                        stream_rng(args.seed, round, t as u64),
                        KeyGen::new(args.range, (t % 2 == 1).then_some(8)),
                        mix,
                    );
                    s.spawn(move || {
                        for _ in 0..args.ops {
                            ops.next_call().run(trie);
                        }
                    })
                })
                .collect();
            for w in workers {
                w.join().expect("worker panicked");
            }
        });
        let report = match quiescent_audit(&trie) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("round {round}: {e}");
                return ExitCode::FAILURE;
            }
        };
        let resurrected = tracker.observe(&report.reachable);
        if !resurrected.is_empty() {
            eprintln!("round {round}: {}", resurrected[0]);
            return ExitCode::FAILURE;
        }
        trie.collect();
        let backlog = trie.reclaim_stats().backlog();
        max_backlog = max_backlog.max(backlog);
        if backlog > bound {
            eprintln!("round {round}: backlog {backlog} exceeds {bound}");
            return ExitCode::FAILURE;
        }
        println!(
            "round {round} {mix}: {} keys, backlog {backlog}",
            report.keys.len()
        );
    }

    let r = trie.instruments();
    println!(
        "instruments records={} audited={} child_cas_violations={} flag_violations={} search_max={} width={} max_backlog={} bound={}",
        r.records,
        r.records_audited,
        r.child_cas_violations(),
        r.flag_violations(),
        r.search_max_iterations,
        args.key_bits,
        max_backlog,
        bound
    );
    if r.child_cas_violations() + r.flag_violations() + r.search_over_width > 0 {
        eprintln!("discipline violated: {r:?}");
        return ExitCode::FAILURE;
    }
    drop(trie);

    if args.histories > 0 {
        let spec = CampaignSpec {
            histories: args.histories,
            seed: args.seed,
            ..CampaignSpec::default()
        };
        let c = run_campaign(&spec);
        println!(
            "campaign histories={} linearizable={} inconclusive={} failures={} child_cas_violations={} flag_violations={}",
            c.histories,
            c.linearizable,
            c.inconclusive,
            c.failures.len(),
            c.instruments.child_cas_violations(),
            c.instruments.flag_violations()
        );
        if !c.passed() || c.instruments.child_cas_violations() + c.instruments.flag_violations() > 0
        {
            eprintln!("campaign failed: {:?}", c.failures.first());
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
