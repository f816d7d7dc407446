//! The shared-memory trie and the routines every operation is built from:
//! search, help, flag-record construction, internal-node construction and
//! the logical-removal test.
//!
//! Memory management. Nodes and flag records are reclaimed through the
//! trie's epoch domain. A flag record is retired by the operation that
//! created it as soon as its `help` call returns: at that point the record
//! sits in no info slot of a reachable node and never will again. Helpers
//! carry a record's `old_child` pointers across threads and compare against
//! them, so every node a record names is reference counted by the record
//! and only retired once the tree link and all naming records are gone.
//! Unflag values are unique integers and need no reclamation.

mod node;
mod set;
pub(crate) mod stats;

use std::ptr;

use arrayvec::ArrayVec;

use crate::error::TrieError;
use crate::keys::{sentinels, Key, Label, MAX_WIDTH};
use crate::reclaim::{Domain, Guard, ReclaimStats};

pub use node::{FlagRecord, Info, Node, ReplaceCase};
pub use set::OpResult;
pub use stats::InstrumentReport;

pub(crate) use node::{free_node, free_record, NodePtr};
use stats::Instruments;

/// Construction parameters.
#[derive(Clone, Copy, Debug)]
pub struct TrieOptions {
    /// Key width in bits, 1..=64.
    pub width: u8,
    /// With `false`, removed nodes and records are kept until the trie drops.
    pub reclamation: bool,
}

impl Default for TrieOptions {
    fn default() -> Self {
        TrieOptions {
            width: MAX_WIDTH,
            reclamation: true,
        }
    }
}

/// A concurrent set of `width`-bit keys.
///
/// `find` is wait-free; `insert`, `delete` and `replace` are lock-free.
/// The keys `0` and `2^width - 1` are reserved.
pub struct Trie {
    root: NodePtr,
    width: u8,
    low: Key,
    high: Key,
    instruments: Box<Instruments>,
    domain: Domain,
}

// SAFETY: all shared mutation goes through atomics; see the module docs for
// the reclamation argument.
unsafe impl Send for Trie {}
unsafe impl Sync for Trie {}

/// What a search saw: the last three nodes on the path and the info values
/// read from the grandparent and parent before their child slots.
pub struct SearchResult<'g> {
    pub gp: Option<&'g Node>,
    pub p: &'g Node,
    pub node: &'g Node,
    pub gp_info: Option<Info>,
    pub p_info: Info,
    pub rmvd: bool,
}

/// Arguments of a flag record before deduplication and sorting.
#[derive(Default)]
pub(crate) struct FlagArgs {
    pub flag: ArrayVec<NodePtr, 4>,
    pub old_info: ArrayVec<Info, 4>,
    pub unflag: ArrayVec<NodePtr, 2>,
    pub p_node: ArrayVec<NodePtr, 2>,
    pub old_child: ArrayVec<NodePtr, 2>,
    pub new_child: ArrayVec<NodePtr, 2>,
    pub rmv_leaf: NodePtr,
}

#[inline]
pub(crate) fn node_ref<'g>(p: NodePtr, _guard: &'g Guard<'_>) -> &'g Node {
    debug_assert!(!p.is_null());
    // SAFETY: every pointer handed to this function was loaded from a child
    // slot, a live record, or the root while `_guard` was active.
    unsafe { &*p }
}

/// `node` is a leaf holding `key` that is not logically removed.
pub fn key_in_trie(node: &Node, key: &Key, rmvd: bool) -> bool {
    node.leaf && node.label == *key.label() && !rmvd
}

/// Whether the leaf carrying `info` has been logically removed by a
/// two-step replace: true once the first child CAS of that record took
/// effect.
pub fn logically_removed(info: Info) -> bool {
    // SAFETY: callers pass a value read from a leaf reached while pinned.
    match unsafe { info.record() } {
        None => false,
        Some(record) => {
            // SAFETY: the record holds references on its nodes.
            let parent = unsafe { &*record.p_node[0] };
            let old = record.old_child[0];
            parent.child(0) != old && parent.child(1) != old
        }
    }
}

impl Trie {
    pub fn new(width: u8) -> Result<Trie, TrieError> {
        Trie::with_options(TrieOptions {
            width,
            ..TrieOptions::default()
        })
    }

    pub fn with_options(options: TrieOptions) -> Result<Trie, TrieError> {
        let width = options.width;
        if width == 0 || width > MAX_WIDTH {
            return Err(TrieError::BadWidth(width));
        }
        let (low, high) = sentinels(width);
        let domain = Domain::with_reclamation(options.reclamation);
        let left = Box::into_raw(Box::new(Node::leaf(*low.label())));
        let right = Box::into_raw(Box::new(Node::leaf(*high.label())));
        let root = Box::into_raw(Box::new(Node::internal(Label::EMPTY, left, right)));
        domain
            .counters()
            .allocated
            .fetch_add(3, std::sync::atomic::Ordering::Relaxed);
        Ok(Trie {
            root,
            width,
            low,
            high,
            instruments: Box::default(),
            domain,
        })
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    /// The reserved keys `0^width` and `1^width`.
    pub fn sentinels(&self) -> (u64, u64) {
        (self.low.value(), self.high.value())
    }

    /// Pins the current thread against this trie's reclamation domain.
    pub fn pin(&self) -> Guard<'_> {
        self.domain.pin()
    }

    pub fn root<'g>(&self, guard: &'g Guard<'_>) -> &'g Node {
        node_ref(self.root, guard)
    }

    pub fn reclaim_stats(&self) -> ReclaimStats {
        self.domain.stats()
    }

    /// Frees whatever retired objects have passed their grace period,
    /// including garbage left by exited threads. Returns how many were freed.
    pub fn collect(&self) -> u64 {
        self.domain.collect()
    }

    /// Hands this thread's pending retired objects to the next `collect`.
    pub fn flush_local(&self) {
        self.domain.flush_local()
    }

    pub fn reclamation_enabled(&self) -> bool {
        self.domain.is_enabled()
    }

    pub fn instruments(&self) -> InstrumentReport {
        self.instruments.report()
    }

    /// Validates `value` as an element of the key universe.
    pub fn key(&self, value: u64) -> Result<Key, TrieError> {
        let key = Key::new(value, self.width)?;
        if key == self.low || key == self.high {
            return Err(TrieError::ReservedKey(value));
        }
        Ok(key)
    }

    /// Descends from the root following the bits of `key`, reading each
    /// node's info slot before its child slot. Never writes.
    pub fn search<'g>(&self, key: &Key, guard: &'g Guard<'_>) -> SearchResult<'g> {
        debug_assert_eq!(key.width(), self.width);
        let mut gp = None;
        let mut gp_info = None;
        let mut p: Option<&'g Node> = None;
        let mut p_info = None;
        let mut node = node_ref(self.root, guard);
        let mut iterations = 0;
        while !node.leaf && node.label.is_prefix_of(key.label()) {
            gp = p;
            gp_info = p_info;
            p = Some(node);
            p_info = Some(node.info());
            node = node_ref(node.child(key.bit(node.label.len() + 1)), guard);
            iterations += 1;
            crate::chaos::point();
        }
        self.instruments
            .search_finished(iterations, self.width as usize);
        let rmvd = node.leaf && logically_removed(node.info());
        SearchResult {
            gp,
            // the root's empty label is a prefix of every key
            p: p.expect("search always enters the root"),
            node,
            gp_info,
            p_info: p_info.expect("search always enters the root"),
            rmvd,
        }
    }

    /// Wait-free membership test.
    pub fn find(&self, value: u64) -> Result<bool, TrieError> {
        let key = self.key(value)?;
        let guard = self.pin();
        let s = self.search(&key, &guard);
        Ok(key_in_trie(s.node, &key, s.rmvd))
    }

    fn count_alloc(&self, n: u64) {
        self.domain
            .counters()
            .allocated
            .fetch_add(n, std::sync::atomic::Ordering::Relaxed);
    }

    pub(crate) fn alloc_leaf(&self, key: &Key) -> NodePtr {
        self.count_alloc(1);
        Box::into_raw(Box::new(Node::leaf(*key.label())))
    }

    /// A new node with `node`'s label and current children, and a fresh info value.
    pub(crate) fn alloc_copy(&self, node: &Node) -> NodePtr {
        self.count_alloc(1);
        let copy = if node.leaf {
            Node::leaf(node.label)
        } else {
            Node::internal(node.label, node.child(0), node.child(1))
        };
        Box::into_raw(Box::new(copy))
    }

    /// Frees a node no other thread has ever seen.
    pub(crate) fn free_unpublished(&self, p: NodePtr) {
        // SAFETY: never shared, so no reader exists.
        unsafe { drop(Box::from_raw(p)) };
        self.domain
            .counters()
            .freed
            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    }

    /// Drops one reference on `n`, retiring it when it was the last.
    pub(crate) fn release(&self, n: NodePtr, guard: &Guard<'_>) {
        let node = node_ref(n, guard);
        if node.release() {
            node.mark_retired();
            // SAFETY: no tree link and no live record names the node.
            unsafe { guard.defer(n as *mut (), free_node) };
        }
    }

    /// A new internal node over `n1` and `n2`, or `None` when one label is a
    /// prefix of the other (after helping `info` if it is a flag record).
    pub(crate) fn create_node(
        &self,
        n1: &Node,
        n2: &Node,
        info: Option<Info>,
        guard: &Guard<'_>,
    ) -> Option<NodePtr> {
        if n1.label.is_prefix_of(&n2.label) || n2.label.is_prefix_of(&n1.label) {
            // SAFETY: `info` was read from a node reached while pinned.
            if let Some(record) = info.and_then(|i| unsafe { i.record() }) {
                self.help(record, guard);
            }
            return None;
        }
        let lcp = n1.label.common_prefix(&n2.label);
        let n1p = n1 as *const Node as NodePtr;
        let n2p = n2 as *const Node as NodePtr;
        let (left, right) = if n1.label.bit(lcp.len() + 1) == 0 {
            (n1p, n2p)
        } else {
            (n2p, n1p)
        };
        self.count_alloc(1);
        Some(Box::into_raw(Box::new(Node::internal(lcp, left, right))))
    }

    /// Builds a flag record, or returns `None` when the attempt must restart:
    /// some expected info value is a flag (which is helped first), a node
    /// appears twice with different expected info values, or a named node
    /// has already been retired.
    pub(crate) fn new_flag(&self, args: FlagArgs, guard: &Guard<'_>) -> Option<*mut FlagRecord> {
        for info in &args.old_info {
            // SAFETY: read from nodes reached while pinned.
            if let Some(record) = unsafe { info.record() } {
                self.help(record, guard);
                return None;
            }
        }
        let FlagArgs {
            flag,
            old_info,
            unflag,
            p_node,
            old_child,
            new_child,
            rmv_leaf,
        } = args;

        let mut pairs: ArrayVec<(NodePtr, Info), 4> = ArrayVec::new();
        for (&n, &info) in flag.iter().zip(&old_info) {
            match pairs.iter().find(|(m, _)| ptr::eq(*m, n)) {
                Some(&(_, seen)) if seen != info => return None,
                Some(_) => {}
                None => pairs.push((n, info)),
            }
        }
        pairs.sort_by(|a, b| {
            let (x, y) = (node_ref(a.0, guard), node_ref(b.0, guard));
            x.label.cmp(&y.label).then(x.id.cmp(&y.id))
        });
        let mut unique_unflag: ArrayVec<NodePtr, 2> = ArrayVec::new();
        for &n in &unflag {
            if !unique_unflag.iter().any(|m| ptr::eq(*m, n)) {
                unique_unflag.push(n);
            }
        }
        for w in pairs.windows(2) {
            let (a, b) = (node_ref(w[0].0, guard).label, node_ref(w[1].0, guard).label);
            if a > b {
                self.instruments.flag_unsorted();
            } else if a == b {
                self.instruments.flag_label_tie();
            }
        }

        let mut held: ArrayVec<NodePtr, 11> = ArrayVec::new();
        let named = pairs
            .iter()
            .map(|p| p.0)
            .chain(p_node.iter().copied())
            .chain(old_child.iter().copied())
            .chain(new_child.iter().copied())
            .chain((!rmv_leaf.is_null()).then_some(rmv_leaf));
        for n in named {
            if held.iter().any(|m| ptr::eq(*m, n)) {
                continue;
            }
            if !node_ref(n, guard).try_acquire() {
                for &m in &held {
                    self.release(m, guard);
                }
                self.instruments.stale_ref();
                return None;
            }
            held.push(n);
        }

        let (flag, old_info) = pairs.into_iter().unzip();
        self.count_alloc(1);
        self.instruments.record_created();
        Some(Box::into_raw(Box::new(FlagRecord::new(
            flag,
            old_info,
            unique_unflag,
            p_node,
            old_child,
            new_child,
            rmv_leaf,
            held,
            &*self.instruments,
        ))))
    }

    /// Carries out the update described by `record`: flag CAS steps in
    /// order, then (if all held) the child CAS steps and unflag CAS steps,
    /// otherwise backtrack CAS steps. Returns whether the update took effect.
    pub(crate) fn help(&self, record: &FlagRecord, guard: &Guard<'_>) -> bool {
        use std::sync::atomic::Ordering::{Relaxed, SeqCst};

        self.instruments.help_called();
        let me = Info::of(record);
        let mut do_child_cas = true;
        let mut i = 0;
        while i < record.flag.len() && do_child_cas {
            let target = node_ref(record.flag[i], guard);
            if target.info.cas(record.old_info[i], me) {
                self.instruments.flag_won(record, i);
            }
            crate::chaos::point();
            do_child_cas = target.info.load() == me;
            if do_child_cas {
                record.confirmed.fetch_or(1 << i, Relaxed);
            }
            i += 1;
        }
        if do_child_cas {
            record.flag_done.store(true, SeqCst);
            if !record.rmv_leaf.is_null() {
                node_ref(record.rmv_leaf, guard).info.store(me);
            }
            for i in 0..record.p_node.len() {
                let parent = node_ref(record.p_node[i], guard);
                let new = node_ref(record.new_child[i], guard);
                let k = new.label.bit(parent.label.len() + 1);
                if parent.child[k]
                    .compare_exchange(record.old_child[i], record.new_child[i], SeqCst, SeqCst)
                    .is_ok()
                {
                    record.child_wins[i].fetch_add(1, Relaxed);
                }
                crate::chaos::point();
            }
        }
        crate::chaos::point();
        if record.flag_done.load(SeqCst) {
            for &n in record.unflag.iter().rev() {
                node_ref(n, guard).info.cas(me, Info::fresh_unflag());
            }
            true
        } else {
            for &n in record.flag.iter().rev() {
                node_ref(n, guard).info.cas(me, Info::fresh_unflag());
            }
            false
        }
    }
}

impl Drop for Trie {
    fn drop(&mut self) {
        // Retired records first: they hold references on tree nodes.
        // SAFETY: `&mut self` rules out guards and concurrent operations.
        unsafe { self.domain.drain() };
        let mut stack = vec![self.root];
        while let Some(p) = stack.pop() {
            // SAFETY: after draining, the tree is the only owner of its nodes.
            let node = unsafe { Box::from_raw(p) };
            if !node.leaf {
                stack.push(node.child(0));
                stack.push(node.child(1));
            }
        }
    }
}
