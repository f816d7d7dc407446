// Counts heap bytes so that a dropped trie can be checked for leaks. Kept in
// its own test binary: the counter is process wide.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicIsize, Ordering::SeqCst};

use nbtrie::{Trie, TrieOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Counting;

static LIVE: AtomicIsize = AtomicIsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        LIVE.fetch_add(layout.size() as isize, SeqCst);
        System.alloc(layout)
    }
    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        LIVE.fetch_sub(layout.size() as isize, SeqCst);
        System.dealloc(ptr, layout)
    }
}

#[global_allocator]
static A: Counting = Counting;

fn churn(t: &Trie, threads: u64) {
    std::thread::scope(|s| {
        for id in 0..threads {
            s.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(id);
                for _ in 0..5_000 {
                    let v = rng.gen_range(1..127);
                    match rng.gen_range(0..4) {
                        0 => t.insert(v).unwrap(),
                        1 => t.delete(v).unwrap(),
                        2 => t.find(v).unwrap(),
                        _ => t.replace(v, rng.gen_range(1..127)).unwrap_or(false),
                    };
                }
            });
        }
    });
}

#[test]
fn dropping_a_trie_frees_everything() {
    // warm up thread-locals and the test harness before taking a baseline
    churn(&Trie::new(7).unwrap(), 1);
    for reclamation in [true, false] {
        let base = LIVE.load(SeqCst);
        {
            let t = Trie::with_options(TrieOptions {
                width: 7,
                reclamation,
            })
            .unwrap();
            churn(&t, 3);
            t.insert(5).unwrap_or(false);
        }
        let leaked = LIVE.load(SeqCst) - base;
        // participant records of this thread may stay behind; nodes may not
        assert!(
            leaked < 4096,
            "reclamation={reclamation}: {leaked} bytes leaked"
        );
    }
}
