//! Structural copies of the trie for audits, tests and dumps.
//!
//! A snapshot taken while updates are in flight is a best-effort read;
//! only a quiescent snapshot is meaningful for invariant checks.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use crate::keys::Label;
use crate::trie::{logically_removed, Node, Trie};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfoState {
    Unflag,
    Flag { record: u64, done: bool },
}

#[derive(Clone, Debug)]
pub struct SnapNode {
    pub id: u64,
    pub label: Label,
    pub leaf: bool,
    /// Indices into [`Snapshot::nodes`]; `None` for leaves.
    pub children: Option<[usize; 2]>,
    /// Parent slots found pointing at this node.
    pub parents: usize,
    pub info: InfoState,
    pub logically_removed: bool,
}

/// Reachable nodes in depth-first order; the root is at index 0.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub width: u8,
    pub nodes: Vec<SnapNode>,
}

impl Trie {
    pub fn snapshot(&self) -> Snapshot {
        let guard = self.pin();
        let mut nodes: Vec<SnapNode> = Vec::new();
        let mut index: HashMap<*const Node, usize> = HashMap::new();
        let root = self.root(&guard);
        // (node, parent index, slot)
        let mut stack: Vec<(&Node, Option<(usize, usize)>)> = vec![(root, None)];
        while let Some((node, parent)) = stack.pop() {
            let key = node as *const Node;
            if let Some(&at) = index.get(&key) {
                nodes[at].parents += 1;
                if let Some((p, slot)) = parent {
                    nodes[p].children.as_mut().unwrap()[slot] = at;
                }
                continue;
            }
            let at = nodes.len();
            index.insert(key, at);
            let info = node.info();
            // SAFETY: read from a node reached while pinned.
            let state = match unsafe { info.record() } {
                None => InfoState::Unflag,
                Some(r) => InfoState::Flag {
                    record: r.id(),
                    done: r.flag_done(),
                },
            };
            nodes.push(SnapNode {
                id: node.id(),
                label: *node.label(),
                leaf: node.is_leaf(),
                children: (!node.is_leaf()).then_some([usize::MAX; 2]),
                parents: usize::from(parent.is_some()),
                info: state,
                logically_removed: node.is_leaf() && logically_removed(info),
            });
            if let Some((p, slot)) = parent {
                nodes[p].children.as_mut().unwrap()[slot] = at;
            }
            if !node.is_leaf() {
                for slot in [1, 0] {
                    let child = crate::trie::node_ref(node.child(slot), &guard);
                    stack.push((child, Some((at, slot))));
                }
            }
        }
        Snapshot {
            width: self.width(),
            nodes,
        }
    }

    /// Non-sentinel keys logically in the set, ascending. Quiescent use only.
    pub fn keys(&self) -> Vec<u64> {
        self.snapshot().keys()
    }
}

impl Snapshot {
    /// Values of leaves that are logically in the trie, sentinels excluded, ascending.
    pub fn keys(&self) -> Vec<u64> {
        let max = crate::keys::sentinels(self.width).1.value();
        let mut keys: Vec<u64> = self
            .nodes
            .iter()
            .filter(|n| n.leaf && !n.logically_removed)
            .map(|n| n.label.value())
            .filter(|&v| v != 0 && v != max)
            .collect();
        keys.sort_unstable();
        keys
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    /// Compact nested form, e.g. `ε(0(0000,0101),1111)`.
    pub fn shape(&self) -> String {
        let mut out = String::new();
        self.shape_at(0, &mut out);
        out
    }

    fn shape_at(&self, at: usize, out: &mut String) {
        let n = &self.nodes[at];
        write!(out, "{}", n.label).unwrap();
        if let Some([l, r]) = n.children {
            out.push('(');
            self.shape_at(l, out);
            out.push(',');
            self.shape_at(r, out);
            out.push(')');
        }
    }
}

/// Indented dump, one node per line: identity, label, kind, info state.
impl fmt::Display for Snapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, depth)) = stack.pop() {
            let n = &self.nodes[at];
            write!(
                f,
                "{:indent$}#{} {} {}",
                "",
                n.id,
                n.label,
                if n.leaf { "leaf" } else { "internal" },
                indent = depth * 2
            )?;
            match n.info {
                InfoState::Unflag => write!(f, " unflag")?,
                InfoState::Flag { record, done } => {
                    write!(f, " flag(#{record}{})", if done { ",done" } else { "" })?
                }
            }
            if n.logically_removed {
                write!(f, " removed")?;
            }
            writeln!(f)?;
            if let Some([l, r]) = n.children {
                stack.push((r, depth + 1));
                stack.push((l, depth + 1));
            }
        }
        Ok(())
    }
}
