//! Epoch-based deferred reclamation, one domain per trie.
//!
//! A thread pins the domain for the duration of a trie operation. Objects
//! handed to [`Guard::defer`] are stamped with the global epoch and freed
//! once the epoch has advanced twice past that stamp; the epoch only
//! advances when every pinned participant has observed the current value,
//! so a thread pinned before an object was retired can still dereference it.
//!
//! Destructors receive a [`Sink`] so that freeing one object may retire
//! others (a flag record dropping its references on nodes).

use std::cell::{Cell, RefCell, UnsafeCell};
use std::marker::PhantomData;
use std::mem;
use std::ptr;
use std::sync::atomic::{fence, AtomicBool, AtomicPtr, AtomicU64, Ordering::*};
use std::sync::{Arc, Mutex};

use crate::ids;

/// Retirements between two collection attempts on a participant.
const COLLECT_EVERY: usize = 32;

/// Frees the object behind the pointer. May retire further objects into the sink.
pub type FreeFn = unsafe fn(*mut (), &mut Sink<'_>);

struct Retired {
    ptr: *mut (),
    free: FreeFn,
    epoch: u64,
}

/// Where cascading retirements go while a batch of garbage is being freed.
pub struct Sink<'a> {
    shared: &'a Shared,
    out: &'a mut Vec<Retired>,
}

impl Sink<'_> {
    /// Retires `ptr` at the current epoch.
    ///
    /// # Safety
    /// Same contract as [`Guard::defer`].
    pub unsafe fn defer(&mut self, ptr: *mut (), free: FreeFn) {
        let epoch = self.shared.epoch.load(SeqCst);
        self.shared.counters.retired.fetch_add(1, Relaxed);
        self.out.push(Retired { ptr, free, epoch });
    }

    pub fn counters(&self) -> &Counters {
        &self.shared.counters
    }
}

/// Allocation and reclamation accounting.
#[derive(Default, Debug)]
pub struct Counters {
    pub allocated: AtomicU64,
    pub freed: AtomicU64,
    pub retired: AtomicU64,
    pub reclaimed: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReclaimStats {
    pub allocated: u64,
    pub freed: u64,
    pub retired: u64,
    pub reclaimed: u64,
}

impl ReclaimStats {
    /// Retired objects not yet freed.
    pub fn backlog(&self) -> u64 {
        self.retired - self.reclaimed
    }

    /// Objects allocated and not yet freed, reachable or not.
    pub fn live(&self) -> u64 {
        self.allocated - self.freed
    }
}

struct Participant {
    // (epoch << 1) | pinned
    state: AtomicU64,
    owned: AtomicBool,
    next: AtomicPtr<Participant>,
    // The fields below are only touched by the owning thread.
    guards: Cell<usize>,
    since_collect: Cell<usize>,
    garbage: UnsafeCell<Vec<Retired>>,
}

// SAFETY: the Cell/UnsafeCell fields are only accessed by the thread that
// currently owns the participant (`owned` acquired by CAS), or under
// exclusive access to the domain.
unsafe impl Sync for Participant {}
unsafe impl Send for Participant {}

pub(crate) struct Shared {
    id: u64,
    epoch: AtomicU64,
    head: AtomicPtr<Participant>,
    alive: AtomicBool,
    enabled: bool,
    // retirements while reclamation is disabled; freed when the domain drops
    parked: Mutex<Vec<Retired>>,
    // garbage handed over by threads that stay alive but go idle
    orphans: Mutex<Vec<Retired>>,
    counters: Counters,
}

// SAFETY: raw pointers inside `parked` are owned garbage, only freed once.
unsafe impl Sync for Shared {}
unsafe impl Send for Shared {}

impl Shared {
    fn participants(&self) -> impl Iterator<Item = &Participant> {
        let mut cur = self.head.load(SeqCst);
        std::iter::from_fn(move || {
            // SAFETY: participants are never freed before `Shared`.
            let p = unsafe { cur.as_ref()? };
            cur = p.next.load(SeqCst);
            Some(p)
        })
    }

    fn acquire(&self) -> &Participant {
        for p in self.participants() {
            if !p.owned.load(Relaxed)
                && p.owned
                    .compare_exchange(false, true, SeqCst, SeqCst)
                    .is_ok()
            {
                return p;
            }
        }
        let p = Box::into_raw(Box::new(Participant {
            state: AtomicU64::new(0),
            owned: AtomicBool::new(true),
            next: AtomicPtr::new(ptr::null_mut()),
            guards: Cell::new(0),
            since_collect: Cell::new(0),
            garbage: UnsafeCell::new(Vec::new()),
        }));
        let mut head = self.head.load(SeqCst);
        loop {
            // SAFETY: `p` is not yet shared.
            unsafe { (*p).next.store(head, SeqCst) };
            match self.head.compare_exchange(head, p, SeqCst, SeqCst) {
                Ok(_) => break,
                Err(h) => head = h,
            }
        }
        // SAFETY: published above, lives as long as `self`.
        unsafe { &*p }
    }

    fn try_advance(&self) -> u64 {
        let epoch = self.epoch.load(SeqCst);
        fence(SeqCst);
        for p in self.participants() {
            let s = p.state.load(SeqCst);
            if s & 1 == 1 && s >> 1 != epoch {
                return epoch;
            }
        }
        fence(SeqCst);
        match self
            .epoch
            .compare_exchange(epoch, epoch + 1, SeqCst, SeqCst)
        {
            Ok(_) => epoch + 1,
            Err(now) => now,
        }
    }

    /// Frees every item of `garbage` whose grace period has elapsed.
    /// Returns how many were freed.
    fn collect_into(&self, garbage: &mut Vec<Retired>) -> usize {
        let now = self.try_advance();
        let (ready, keep): (Vec<_>, Vec<_>) = mem::take(garbage)
            .into_iter()
            .partition(|r| r.epoch + 2 <= now);
        *garbage = keep;
        let n = ready.len();
        let mut sink = Sink {
            shared: self,
            out: garbage,
        };
        for r in ready {
            // SAFETY: the grace period for `r` has elapsed.
            unsafe { (r.free)(r.ptr, &mut sink) };
        }
        self.counters.reclaimed.fetch_add(n as u64, Relaxed);
        n
    }

    /// Adopts the garbage of unowned participants into `own` (which the
    /// caller owns) and frees as much of it as the epochs allow.
    fn collect_all(&self, own: &Participant) -> u64 {
        // SAFETY: we own `own`, and every adopted participant after its CAS.
        let mine = unsafe { &mut *own.garbage.get() };
        for p in self.participants() {
            if ptr::eq(p, own) {
                continue;
            }
            if p.owned
                .compare_exchange(false, true, SeqCst, SeqCst)
                .is_ok()
            {
                mine.append(unsafe { &mut *p.garbage.get() });
                p.owned.store(false, SeqCst);
            }
        }
        mine.append(&mut self.orphans.lock().unwrap_or_else(|e| e.into_inner()));
        // Two advances free anything retired before this call; cascades
        // need a few more rounds.
        let mut freed = 0u64;
        let mut idle = 0;
        while idle < 4 && !mine.is_empty() {
            let n = self.collect_into(mine) as u64;
            freed += n;
            idle = if n == 0 { idle + 1 } else { 0 };
        }
        freed
    }

    /// Frees everything regardless of epochs. Caller guarantees no thread
    /// is pinned and none will pin again.
    unsafe fn drain(&self) {
        let mut pending: Vec<Retired> = Vec::new();
        for p in self.participants() {
            pending.append(&mut mem::take(&mut *p.garbage.get()));
        }
        for list in [&self.parked, &self.orphans] {
            pending.append(&mut mem::take(
                &mut *list.lock().unwrap_or_else(|e| e.into_inner()),
            ));
        }
        while !pending.is_empty() {
            let batch = mem::take(&mut pending);
            let n = batch.len() as u64;
            let mut sink = Sink {
                shared: self,
                out: &mut pending,
            };
            for r in batch {
                (r.free)(r.ptr, &mut sink);
            }
            self.counters.reclaimed.fetch_add(n, Relaxed);
        }
    }
}

impl Drop for Shared {
    fn drop(&mut self) {
        // SAFETY: last reference; nobody can be pinned.
        unsafe { self.drain() };
        let mut cur = *self.head.get_mut();
        while !cur.is_null() {
            // SAFETY: participants were leaked from boxes in `acquire`.
            let p = unsafe { Box::from_raw(cur) };
            cur = p.next.load(Relaxed);
        }
    }
}

struct Handle {
    shared: Arc<Shared>,
    participant: *const Participant,
}

impl Drop for Handle {
    fn drop(&mut self) {
        // SAFETY: `shared` keeps the participant alive. Whatever cannot be
        // freed yet stays with the participant for its next owner.
        let p = unsafe { &*self.participant };
        if self.shared.alive.load(SeqCst) && self.shared.enabled {
            self.shared.collect_all(p);
        }
        p.owned.store(false, SeqCst);
    }
}

thread_local! {
    static HANDLES: RefCell<Vec<Handle>> = const { RefCell::new(Vec::new()) };
}

/// A reclamation domain.
pub struct Domain {
    shared: Arc<Shared>,
}

impl Domain {
    pub fn new() -> Domain {
        Domain::with_reclamation(true)
    }

    /// With `enabled == false` nothing is freed until the domain drops.
    pub fn with_reclamation(enabled: bool) -> Domain {
        Domain {
            shared: Arc::new(Shared {
                id: ids::next(),
                epoch: AtomicU64::new(0),
                head: AtomicPtr::new(ptr::null_mut()),
                alive: AtomicBool::new(true),
                enabled,
                parked: Mutex::new(Vec::new()),
                orphans: Mutex::new(Vec::new()),
                counters: Counters::default(),
            }),
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.shared.enabled
    }

    pub fn counters(&self) -> &Counters {
        &self.shared.counters
    }

    pub fn stats(&self) -> ReclaimStats {
        let c = &self.shared.counters;
        ReclaimStats {
            allocated: c.allocated.load(SeqCst),
            freed: c.freed.load(SeqCst),
            retired: c.retired.load(SeqCst),
            reclaimed: c.reclaimed.load(SeqCst),
        }
    }

    pub fn epoch(&self) -> u64 {
        self.shared.epoch.load(SeqCst)
    }

    fn local(&self) -> (&Participant, bool) {
        let id = self.shared.id;
        let found = HANDLES.try_with(|handles| {
            let mut handles = handles.borrow_mut();
            if let Some(h) = handles.iter().find(|h| h.shared.id == id) {
                return h.participant;
            }
            handles.retain(|h| h.shared.alive.load(Relaxed));
            let p: *const Participant = self.shared.acquire();
            handles.push(Handle {
                shared: Arc::clone(&self.shared),
                participant: p,
            });
            p
        });
        match found {
            // SAFETY: the handle's Arc keeps the participant alive at least
            // as long as this domain.
            Ok(p) => (unsafe { &*p }, false),
            // thread-local storage is being torn down
            Err(_) => (self.shared.acquire(), true),
        }
    }

    /// Pins the current thread. Nested pins are counted.
    pub fn pin(&self) -> Guard<'_> {
        let (p, temporary) = self.local();
        let n = p.guards.get();
        if n == 0 {
            let epoch = self.shared.epoch.load(SeqCst);
            p.state.store(epoch << 1 | 1, SeqCst);
            fence(SeqCst);
        }
        p.guards.set(n + 1);
        Guard {
            domain: self,
            participant: p,
            temporary,
            _not_send: PhantomData,
        }
    }

    /// Advances the epoch as far as possible and frees everything whose
    /// grace period has passed, including garbage left behind by threads
    /// that have exited. Meant for quiescent points; safe at any time.
    pub fn collect(&self) -> u64 {
        let (own, temporary) = self.local();
        let freed = self.shared.collect_all(own);
        if temporary {
            own.owned.store(false, SeqCst);
        }
        freed
    }

    /// Hands the calling thread's pending garbage to the domain, where the
    /// next [`Domain::collect`] picks it up. For long-lived threads, such as
    /// pool workers, that go idle while still holding retired objects.
    pub fn flush_local(&self) {
        if !self.shared.enabled {
            return;
        }
        let (own, temporary) = self.local();
        // SAFETY: we own `own`.
        let mine = unsafe { &mut *own.garbage.get() };
        if !mine.is_empty() {
            self.shared
                .orphans
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .append(mine);
        }
        own.since_collect.set(0);
        if temporary {
            own.owned.store(false, SeqCst);
        }
    }

    /// Frees all pending garbage immediately.
    ///
    /// # Safety
    /// No thread may hold a guard of this domain or reference any retired
    /// object, now or later.
    pub(crate) unsafe fn drain(&mut self) {
        self.shared.drain();
    }
}

impl Default for Domain {
    fn default() -> Self {
        Domain::new()
    }
}

impl Drop for Domain {
    fn drop(&mut self) {
        self.shared.alive.store(false, SeqCst);
        // SAFETY: guards borrow the domain, so none are alive.
        unsafe { self.shared.drain() };
    }
}

/// Active protection for the current thread; objects retired while any
/// guard that predates them is alive are not freed.
pub struct Guard<'d> {
    domain: &'d Domain,
    participant: &'d Participant,
    temporary: bool,
    _not_send: PhantomData<*mut ()>,
}

impl<'d> Guard<'d> {
    pub fn domain(&self) -> &'d Domain {
        self.domain
    }

    /// Schedules `free(ptr)` for after the current grace period.
    ///
    /// # Safety
    /// `ptr` must be unreachable for any thread that pins after this call,
    /// must not be retired twice, and `free` must be the matching destructor.
    pub unsafe fn defer(&self, ptr: *mut (), free: FreeFn) {
        let shared = &*self.domain.shared;
        if !shared.enabled {
            shared.counters.retired.fetch_add(1, Relaxed);
            let epoch = shared.epoch.load(SeqCst);
            shared
                .parked
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .push(Retired { ptr, free, epoch });
            return;
        }
        let p = self.participant;
        let mut sink = Sink {
            shared,
            out: &mut *p.garbage.get(),
        };
        sink.defer(ptr, free);
        let n = p.since_collect.get() + 1;
        if n >= COLLECT_EVERY {
            p.since_collect.set(0);
            shared.collect_into(&mut *p.garbage.get());
        } else {
            p.since_collect.set(n);
        }
    }
}

impl Drop for Guard<'_> {
    fn drop(&mut self) {
        let p = self.participant;
        let n = p.guards.get() - 1;
        p.guards.set(n);
        if n == 0 {
            p.state.store(p.state.load(Relaxed) & !1, SeqCst);
            if self.temporary {
                p.owned.store(false, SeqCst);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;
    use std::sync::{mpsc, Barrier};

    struct Tracked(Arc<AtomicUsize>);

    impl Drop for Tracked {
        fn drop(&mut self) {
            self.0.fetch_add(1, SeqCst);
        }
    }

    unsafe fn free_tracked(p: *mut (), sink: &mut Sink<'_>) {
        drop(Box::from_raw(p as *mut Tracked));
        sink.counters().freed.fetch_add(1, Relaxed);
    }

    fn tracked(dropped: &Arc<AtomicUsize>, d: &Domain) -> *mut () {
        d.counters().allocated.fetch_add(1, Relaxed);
        Box::into_raw(Box::new(Tracked(Arc::clone(dropped)))) as *mut ()
    }

    fn pinned(d: &Domain) -> bool {
        let (p, _) = d.local();
        p.guards.get() > 0
    }

    #[test]
    fn pin_unpin_balanced() {
        let d = Domain::new();
        let g = d.pin();
        assert!(pinned(&d));
        drop(g);
        assert!(!pinned(&d));
        assert_eq!(d.stats().live(), 0);
    }

    #[test]
    fn nested_pins_are_counted() {
        let d = Domain::new();
        let a = d.pin();
        let b = d.pin();
        drop(a);
        assert!(pinned(&d));
        drop(b);
        assert!(!pinned(&d));
    }

    #[test]
    fn retire_with_no_guards_is_reclaimed_on_collect() {
        let d = Domain::new();
        let dropped = Arc::new(AtomicUsize::new(0));
        let g = d.pin();
        unsafe { g.defer(tracked(&dropped, &d), free_tracked) };
        drop(g);
        d.collect();
        assert_eq!(dropped.load(SeqCst), 1);
        assert_eq!(d.stats().backlog(), 0);
        assert_eq!(d.stats().live(), 0);
    }

    #[test]
    fn concurrent_guard_blocks_reclamation() {
        let d = Domain::new();
        let dropped = Arc::new(AtomicUsize::new(0));
        let pinned_up = Barrier::new(2);
        let (release_tx, release_rx) = mpsc::channel::<()>();
        std::thread::scope(|s| {
            s.spawn(|| {
                let release_rx = release_rx;
                let _g = d.pin();
                pinned_up.wait();
                release_rx.recv().unwrap();
            });
            pinned_up.wait();
            let g = d.pin();
            unsafe { g.defer(tracked(&dropped, &d), free_tracked) };
            drop(g);
            for _ in 0..10 {
                d.collect();
            }
            assert_eq!(dropped.load(SeqCst), 0, "freed under an older guard");
            release_tx.send(()).unwrap();
        });
        d.collect();
        assert_eq!(dropped.load(SeqCst), 1);
    }

    #[test]
    fn cascading_retirements_are_followed() {
        // freeing the outer object retires the inner one
        struct Outer(*mut (), Arc<AtomicUsize>);
        unsafe fn free_outer(p: *mut (), sink: &mut Sink<'_>) {
            let o = Box::from_raw(p as *mut Outer);
            o.1.fetch_add(1, SeqCst);
            sink.defer(o.0, free_tracked);
        }
        let d = Domain::new();
        let dropped = Arc::new(AtomicUsize::new(0));
        let inner = tracked(&dropped, &d);
        let outer = Box::into_raw(Box::new(Outer(inner, Arc::clone(&dropped)))) as *mut ();
        let g = d.pin();
        unsafe { g.defer(outer, free_outer) };
        drop(g);
        d.collect();
        assert_eq!(dropped.load(SeqCst), 2);
        assert_eq!(d.stats().retired, 2);
        assert_eq!(d.stats().backlog(), 0);
    }

    #[test]
    fn exited_threads_leave_garbage_for_collect() {
        let d = Domain::new();
        let dropped = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    for _ in 0..10 {
                        let g = d.pin();
                        unsafe { g.defer(tracked(&dropped, &d), free_tracked) };
                    }
                });
            }
        });
        d.collect();
        assert_eq!(dropped.load(SeqCst), 40);
        assert_eq!(d.stats().backlog(), 0);
    }

    #[test]
    fn disabled_domain_frees_on_drop() {
        let dropped = Arc::new(AtomicUsize::new(0));
        {
            let d = Domain::with_reclamation(false);
            for _ in 0..100 {
                let g = d.pin();
                unsafe { g.defer(tracked(&dropped, &d), free_tracked) };
            }
            d.collect();
            assert_eq!(dropped.load(SeqCst), 0);
            assert_eq!(d.stats().backlog(), 100);
        }
        assert_eq!(dropped.load(SeqCst), 100);
    }

    #[test]
    fn periodic_collection_bounds_backlog() {
        let d = Domain::new();
        let dropped = Arc::new(AtomicUsize::new(0));
        for _ in 0..10_000 {
            let g = d.pin();
            unsafe { g.defer(tracked(&dropped, &d), free_tracked) };
        }
        assert!(d.stats().backlog() <= 2 * COLLECT_EVERY as u64 + 2);
    }
}
