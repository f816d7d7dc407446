//! Optional scheduling noise for tests.
//!
//! With the `chaos` feature, operations call [`point`] between their
//! shared-memory steps and yield the processor at a configurable rate, so
//! even a single core sees operations interleave mid-flight. Without the
//! feature every function here is a no-op.

#[cfg(feature = "chaos")]
mod imp {
    use std::cell::Cell;
    use std::sync::atomic::{AtomicU32, Ordering::Relaxed};

    static RATE: AtomicU32 = AtomicU32::new(0);

    thread_local! {
        static STATE: Cell<u64> = const { Cell::new(0) };
    }

    pub fn set_yield_rate(per_mille: u32) {
        RATE.store(per_mille.min(1000), Relaxed);
    }

    pub fn yield_rate() -> u32 {
        RATE.load(Relaxed)
    }

    #[inline]
    pub fn point() {
        let rate = RATE.load(Relaxed);
        if rate == 0 {
            return;
        }
        let roll = STATE
            .try_with(|s| {
                let mut x = s.get();
                if x == 0 {
                    x = crate::ids::next().wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
                }
                // xorshift64
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                s.set(x);
                x % 1000
            })
            .unwrap_or(1000);
        if roll < rate as u64 {
            std::thread::yield_now();
        }
    }
}

#[cfg(not(feature = "chaos"))]
mod imp {
    pub fn set_yield_rate(_per_mille: u32) {}

    pub fn yield_rate() -> u32 {
        0
    }

    #[inline(always)]
    pub fn point() {}
}

/// Sets the probability, in thousandths, of yielding at each point.
/// Process wide. Ignored without the `chaos` feature.
pub use imp::set_yield_rate;
pub use imp::yield_rate;

pub(crate) use imp::point;

/// Whether this build has yield points compiled in.
pub const ENABLED: bool = cfg!(feature = "chaos");
