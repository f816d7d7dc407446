use std::fmt;
use std::ptr;
use std::sync::atomic::{AtomicBool, AtomicPtr, AtomicU8, AtomicUsize, Ordering::*};

use arrayvec::ArrayVec;

use crate::ids;
use crate::keys::Label;
use crate::reclaim::Sink;
use crate::trie::stats::Instruments;

pub(crate) type NodePtr = *mut Node;

/// Contents of an info slot: either a flag record or an unflag marker.
///
/// An unflag marker is a never-reused odd integer standing in for a freshly
/// allocated unflag object, so a slot that is unflagged twice never holds
/// the same value twice. Flag records are heap objects (even addresses).
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Info(*mut FlagRecord);

// SAFETY: an `Info` is a plain word; dereferencing it is gated elsewhere.
unsafe impl Send for Info {}
unsafe impl Sync for Info {}

impl Info {
    pub(crate) fn fresh_unflag() -> Info {
        Info(ptr::without_provenance_mut(
            ((ids::next() << 1) | 1) as usize,
        ))
    }

    pub(crate) fn of(record: &FlagRecord) -> Info {
        Info(record as *const FlagRecord as *mut FlagRecord)
    }

    #[inline]
    pub fn is_flag(self) -> bool {
        self.0.addr() & 1 == 0
    }

    /// # Safety
    /// The value must have been read from an info slot of a node reached
    /// while pinned, so a flag record behind it has not been freed.
    #[inline]
    pub(crate) unsafe fn record<'g>(self) -> Option<&'g FlagRecord> {
        if self.is_flag() {
            Some(&*self.0)
        } else {
            None
        }
    }
}

impl fmt::Debug for Info {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_flag() {
            write!(f, "Flag({:p})", self.0)
        } else {
            write!(f, "Unflag({})", self.0.addr() >> 1)
        }
    }
}

pub(crate) struct InfoCell(AtomicPtr<FlagRecord>);

impl InfoCell {
    fn new(info: Info) -> InfoCell {
        InfoCell(AtomicPtr::new(info.0))
    }

    #[inline]
    pub(crate) fn load(&self) -> Info {
        Info(self.0.load(SeqCst))
    }

    #[inline]
    pub(crate) fn store(&self, info: Info) {
        self.0.store(info.0, SeqCst)
    }

    #[inline]
    pub(crate) fn cas(&self, old: Info, new: Info) -> bool {
        self.0
            .compare_exchange(old.0, new.0, SeqCst, SeqCst)
            .is_ok()
    }
}

/// A trie vertex. Leaves leave `child` null.
pub struct Node {
    pub(crate) label: Label,
    pub(crate) leaf: bool,
    pub(crate) child: [AtomicPtr<Node>; 2],
    pub(crate) info: InfoCell,
    // one for the tree link (or the creating operation), one per live flag
    // record naming this node
    refs: AtomicUsize,
    pub(crate) id: u64,
    #[cfg(debug_assertions)]
    retired: AtomicBool,
}

impl Node {
    pub(crate) fn leaf(label: Label) -> Node {
        Node::build(label, true, ptr::null_mut(), ptr::null_mut())
    }

    pub(crate) fn internal(label: Label, left: NodePtr, right: NodePtr) -> Node {
        Node::build(label, false, left, right)
    }

    fn build(label: Label, leaf: bool, left: NodePtr, right: NodePtr) -> Node {
        Node {
            label,
            leaf,
            child: [AtomicPtr::new(left), AtomicPtr::new(right)],
            info: InfoCell::new(Info::fresh_unflag()),
            refs: AtomicUsize::new(1),
            id: ids::next(),
            #[cfg(debug_assertions)]
            retired: AtomicBool::new(false),
        }
    }

    pub fn label(&self) -> &Label {
        &self.label
    }

    pub fn is_leaf(&self) -> bool {
        self.leaf
    }

    /// Process-unique identity, stable for the node's lifetime.
    pub fn id(&self) -> u64 {
        self.id
    }

    #[inline]
    pub(crate) fn child(&self, i: usize) -> NodePtr {
        self.child[i].load(SeqCst)
    }

    pub(crate) fn info(&self) -> Info {
        self.info.load()
    }

    /// Takes a reference unless the count already dropped to zero.
    pub(crate) fn try_acquire(&self) -> bool {
        let mut n = self.refs.load(SeqCst);
        loop {
            if n == 0 {
                return false;
            }
            match self.refs.compare_exchange_weak(n, n + 1, SeqCst, SeqCst) {
                Ok(_) => return true,
                Err(now) => n = now,
            }
        }
    }

    /// Drops a reference; true when it was the last one.
    pub(crate) fn release(&self) -> bool {
        let prev = self.refs.fetch_sub(1, SeqCst);
        debug_assert!(prev > 0, "reference count underflow on node {}", self.id);
        prev == 1
    }

    #[cfg(test)]
    pub(crate) fn refs(&self) -> usize {
        self.refs.load(SeqCst)
    }

    pub(crate) fn mark_retired(&self) {
        #[cfg(debug_assertions)]
        assert!(
            !self.retired.swap(true, SeqCst),
            "node {} retired twice",
            self.id
        );
    }
}

pub(crate) unsafe fn free_node(p: *mut (), sink: &mut Sink<'_>) {
    drop(Box::from_raw(p as NodePtr));
    sink.counters().freed.fetch_add(1, Relaxed);
}

/// Replace dispatch arm that produced a record, for instrumentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReplaceCase {
    /// Insertion and deletion touch disjoint parts of the trie: two child CAS steps.
    General,
    /// The new key lands on the leaf being removed.
    SameLeaf,
    /// The new key's search stops at the removed leaf's parent.
    ParentIsTarget,
    /// Both keys hang below the same parent.
    SharedParent,
    /// The new key's search stops at the removed leaf's grandparent.
    GrandparentIsTarget,
}

impl ReplaceCase {
    pub const ALL: [ReplaceCase; 5] = [
        ReplaceCase::General,
        ReplaceCase::SameLeaf,
        ReplaceCase::ParentIsTarget,
        ReplaceCase::SharedParent,
        ReplaceCase::GrandparentIsTarget,
    ];

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

pub(crate) const OUTCOME_PENDING: u8 = 0;
pub(crate) const OUTCOME_SUCCESS: u8 = 1;
pub(crate) const OUTCOME_FAILURE: u8 = 2;

/// Operation descriptor; everything a helper needs to finish an update.
/// All fields but `flag_done` (and the instrumentation) are fixed at creation.
pub struct FlagRecord {
    pub(crate) flag: ArrayVec<NodePtr, 4>,
    pub(crate) old_info: ArrayVec<Info, 4>,
    pub(crate) unflag: ArrayVec<NodePtr, 2>,
    pub(crate) p_node: ArrayVec<NodePtr, 2>,
    pub(crate) old_child: ArrayVec<NodePtr, 2>,
    pub(crate) new_child: ArrayVec<NodePtr, 2>,
    pub(crate) rmv_leaf: NodePtr,
    pub(crate) flag_done: AtomicBool,
    // distinct nodes above, each holding one reference
    pub(crate) held: ArrayVec<NodePtr, 11>,
    pub(crate) id: u64,
    pub(crate) instruments: *const Instruments,
    // successful flag CASes per flag index
    pub(crate) flag_wins: [AtomicU8; 4],
    // bit i: some helper saw flag[i] holding this record
    pub(crate) confirmed: AtomicU8,
    pub(crate) child_wins: [AtomicU8; 2],
    pub(crate) outcome: AtomicU8,
    #[cfg(debug_assertions)]
    retired: AtomicBool,
}

// SAFETY: shared between helpers; raw pointers are protected by the
// reclamation scheme and the reference counts in `held`.
unsafe impl Send for FlagRecord {}
unsafe impl Sync for FlagRecord {}

impl FlagRecord {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        flag: ArrayVec<NodePtr, 4>,
        old_info: ArrayVec<Info, 4>,
        unflag: ArrayVec<NodePtr, 2>,
        p_node: ArrayVec<NodePtr, 2>,
        old_child: ArrayVec<NodePtr, 2>,
        new_child: ArrayVec<NodePtr, 2>,
        rmv_leaf: NodePtr,
        held: ArrayVec<NodePtr, 11>,
        instruments: *const Instruments,
    ) -> FlagRecord {
        FlagRecord {
            flag,
            old_info,
            unflag,
            p_node,
            old_child,
            new_child,
            rmv_leaf,
            flag_done: AtomicBool::new(false),
            held,
            id: ids::next(),
            instruments,
            flag_wins: Default::default(),
            confirmed: AtomicU8::new(0),
            child_wins: Default::default(),
            outcome: AtomicU8::new(OUTCOME_PENDING),
            #[cfg(debug_assertions)]
            retired: AtomicBool::new(false),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn flag_done(&self) -> bool {
        self.flag_done.load(SeqCst)
    }

    pub(crate) fn mark_retired(&self) {
        #[cfg(debug_assertions)]
        assert!(
            !self.retired.swap(true, SeqCst),
            "flag record {} retired twice",
            self.id
        );
    }
}

/// Frees a record once no helper can reach it, audits its CAS counters and
/// drops its node references.
pub(crate) unsafe fn free_record(p: *mut (), sink: &mut Sink<'_>) {
    let record = Box::from_raw(p as *mut FlagRecord);
    if let Some(instruments) = record.instruments.as_ref() {
        instruments.audit_record(&record);
    }
    for &n in &record.held {
        if (*n).release() {
            (*n).mark_retired();
            sink.defer(n as *mut (), free_node);
        }
    }
    drop(record);
    sink.counters().freed.fetch_add(1, Relaxed);
}
