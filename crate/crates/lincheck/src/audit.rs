//! Whole-trie invariant checks for quiescent points.

use std::collections::HashSet;
use std::fmt;

use nbtrie::{InfoState, Snapshot, Trie};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// A child's label does not extend its parent's label and slot bit.
    Prefix {
        parent: u64,
        slot: usize,
        child: u64,
    },
    DuplicateLabel {
        a: u64,
        b: u64,
    },
    /// A non-root node referenced by other than exactly one parent slot.
    Parents {
        node: u64,
        count: usize,
    },
    MissingSentinel {
        value: u64,
    },
    RemovedSentinel {
        node: u64,
    },
    /// A reachable node still carries a flag record while nothing runs.
    Flagged {
        node: u64,
    },
    /// A node left the reachable set and came back.
    Resurrected {
        node: u64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Prefix {
                parent,
                slot,
                child,
            } => {
                write!(f, "#{child} is not below #{parent} slot {slot}")
            }
            Violation::DuplicateLabel { a, b } => write!(f, "#{a} and #{b} share a label"),
            Violation::Parents { node, count } => write!(f, "#{node} has {count} parent slots"),
            Violation::MissingSentinel { value } => write!(f, "sentinel {value:#x} unreachable"),
            Violation::RemovedSentinel { node } => write!(f, "sentinel #{node} logically removed"),
            Violation::Flagged { node } => write!(f, "#{node} flagged at a quiescent point"),
            Violation::Resurrected { node } => write!(f, "#{node} reachable again"),
        }
    }
}

/// A failed audit, with the offending trie rendered as an indented dump.
#[derive(Debug, Error)]
#[error("{} invariant violation(s), first: {}\n{dump}", .violations.len(), .violations[0])]
pub struct AuditError {
    pub violations: Vec<Violation>,
    pub dump: String,
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    /// Non-sentinel keys logically in the trie, ascending.
    pub keys: Vec<u64>,
    /// Identities of all reachable nodes.
    pub reachable: HashSet<u64>,
    pub snapshot: Snapshot,
}

/// Checks the prefix, unique-label, unique-parent and sentinel invariants
/// on a snapshot. Only meaningful when no operation is in flight.
pub fn check_snapshot(snap: &Snapshot) -> Vec<Violation> {
    let mut out = Vec::new();
    let nodes = &snap.nodes;
    for (i, n) in nodes.iter().enumerate() {
        let expected = usize::from(i != 0);
        if n.parents != expected {
            out.push(Violation::Parents {
                node: n.id,
                count: n.parents,
            });
        }
        if let Some(children) = n.children {
            for (slot, &c) in children.iter().enumerate() {
                let child = &nodes[c];
                let want = n.label.push(slot);
                if child.label.len() < want.len() || !want.is_prefix_of(&child.label) {
                    out.push(Violation::Prefix {
                        parent: n.id,
                        slot,
                        child: child.id,
                    });
                }
            }
        }
        if matches!(n.info, InfoState::Flag { .. }) {
            out.push(Violation::Flagged { node: n.id });
        }
    }
    let mut by_label: Vec<(nbtrie::Label, u64)> = nodes.iter().map(|n| (n.label, n.id)).collect();
    by_label.sort();
    for w in by_label.windows(2) {
        if w[0].0 == w[1].0 {
            out.push(Violation::DuplicateLabel {
                a: w[0].1,
                b: w[1].1,
            });
        }
    }
    let (low, high) = nbtrie::sentinels(snap.width);
    for s in [low, high] {
        match nodes.iter().find(|n| n.leaf && n.label == *s.label()) {
            None => out.push(Violation::MissingSentinel { value: s.value() }),
            Some(n) if n.logically_removed => out.push(Violation::RemovedSentinel { node: n.id }),
            Some(_) => {}
        }
    }
    out
}

fn fail(snap: &Snapshot, violations: Vec<Violation>) -> AuditError {
    // a corrupted structure may not be printable as a tree
    let dump = if violations
        .iter()
        .any(|v| matches!(v, Violation::Parents { .. }))
    {
        format!("{snap:#?}")
    } else {
        snap.to_string()
    };
    AuditError { violations, dump }
}

/// Audits `trie`; the caller guarantees no operation is in flight.
pub fn quiescent_audit(trie: &Trie) -> Result<AuditReport, AuditError> {
    let snapshot = trie.snapshot();
    let violations = check_snapshot(&snapshot);
    if !violations.is_empty() {
        return Err(fail(&snapshot, violations));
    }
    Ok(AuditReport {
        keys: snapshot.keys(),
        reachable: snapshot.ids().collect(),
        snapshot,
    })
}

/// Follows reachable sets across the snapshots of one run and reports any
/// node identity that becomes reachable again after leaving.
#[derive(Debug, Default)]
pub struct ReachabilityTracker {
    current: HashSet<u64>,
    departed: HashSet<u64>,
    snapshots: usize,
}

impl ReachabilityTracker {
    pub fn new() -> ReachabilityTracker {
        ReachabilityTracker::default()
    }

    pub fn observe(&mut self, reachable: &HashSet<u64>) -> Vec<Violation> {
        let back: Vec<Violation> = reachable
            .intersection(&self.departed)
            .map(|&node| Violation::Resurrected { node })
            .collect();
        self.departed.extend(self.current.difference(reachable));
        self.current = reachable.clone();
        self.snapshots += 1;
        back
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    /// Identities seen leaving so far.
    pub fn departed(&self) -> usize {
        self.departed.len()
    }
}
