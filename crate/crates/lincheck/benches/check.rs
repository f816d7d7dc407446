use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nbtrie_lincheck::campaign::{run_campaign_seq, CampaignSpec};
use nbtrie_lincheck::{check_linearizable, run_workload, Mix, Trie, WorkloadSpec};

fn bench_checker(c: &mut Criterion) {
    let trie = Trie::new(3).unwrap();
    let spec = WorkloadSpec {
        threads: 3,
        ops_per_thread: 8,
        keys: vec![1, 2, 3, 4],
        mix: Mix::new(25, 25, 25, 25),
        seed: 1,
        jitter: true,
    };
    let histories: Vec<_> = (0..32)
        .map(|i| {
            run_workload(
                &trie,
                &WorkloadSpec {
                    seed: i,
                    ..spec.clone()
                },
            )
        })
        .collect();
    c.bench_function("check/3x8", |b| {
        b.iter(|| {
            for h in &histories {
                black_box(check_linearizable(h));
            }
        })
    });
}

fn bench_campaign(c: &mut Criterion) {
    let spec = CampaignSpec {
        histories: 64,
        ..CampaignSpec::default()
    };
    let mut group = c.benchmark_group("campaign");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(run_campaign_seq(&spec)))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(nbtrie_lincheck::campaign::run_campaign_par(&spec)))
    });
    group.finish();
}

criterion_group!(benches, bench_checker, bench_campaign);
criterion_main!(benches);
