//! insert, delete and replace: retry loops over search, create_node,
//! new_flag and help.

use std::sync::atomic::Ordering::Relaxed;

use arrayvec::ArrayVec;

use super::node::{OUTCOME_FAILURE, OUTCOME_SUCCESS};
use super::{key_in_trie, node_ref, FlagArgs, NodePtr, ReplaceCase, Trie};
use crate::error::TrieError;
use crate::keys::Key;
use crate::reclaim::Guard;

/// Outcome of an update together with how many attempts it took.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpResult {
    pub success: bool,
    /// Iterations of the retry loop, at least 1.
    pub retries: u64,
    /// For a successful replace, the dispatch arm that completed it.
    pub case: Option<ReplaceCase>,
}

enum Step {
    Done(bool),
    Retry,
}

// Nodes an attempt allocated and nodes its success unlinks.
#[derive(Default)]
struct Attempt {
    fresh: ArrayVec<NodePtr, 3>,
    removed: ArrayVec<NodePtr, 3>,
    case: Option<ReplaceCase>,
}

macro_rules! av {
    ($($x:expr),* $(,)?) => { [$($x),*].into_iter().collect() };
}

fn ptr_of(n: &super::Node) -> NodePtr {
    n as *const super::Node as NodePtr
}

impl Trie {
    pub fn insert(&self, value: u64) -> Result<bool, TrieError> {
        self.insert_op(value).map(|r| r.success)
    }

    pub fn delete(&self, value: u64) -> Result<bool, TrieError> {
        self.delete_op(value).map(|r| r.success)
    }

    /// Atomically removes `old` and adds `new`. Succeeds only when `old` is
    /// present and `new` is absent.
    pub fn replace(&self, old: u64, new: u64) -> Result<bool, TrieError> {
        self.replace_op(old, new).map(|r| r.success)
    }

    pub fn insert_op(&self, value: u64) -> Result<OpResult, TrieError> {
        let key = self.key(value)?;
        Ok(self.retry_loop(|guard, attempt| self.insert_attempt(&key, guard, attempt)))
    }

    pub fn delete_op(&self, value: u64) -> Result<OpResult, TrieError> {
        let key = self.key(value)?;
        Ok(self.retry_loop(|guard, attempt| self.delete_attempt(&key, guard, attempt)))
    }

    pub fn replace_op(&self, old: u64, new: u64) -> Result<OpResult, TrieError> {
        let v_d = self.key(old)?;
        let v_i = self.key(new)?;
        if v_d == v_i {
            return Err(TrieError::SameKey(old));
        }
        Ok(self.retry_loop(|guard, attempt| self.replace_attempt(&v_d, &v_i, guard, attempt)))
    }

    fn retry_loop<F>(&self, mut body: F) -> OpResult
    where
        F: FnMut(&Guard<'_>, &mut Attempt) -> Step,
    {
        let guard = self.pin();
        let mut retries = 0;
        loop {
            retries += 1;
            let mut attempt = Attempt::default();
            if let Step::Done(success) = body(&guard, &mut attempt) {
                return OpResult {
                    success,
                    retries,
                    case: if success { attempt.case } else { None },
                };
            }
        }
    }

    // Runs the record built from `args` (if any) and settles ownership of
    // the attempt's nodes either way.
    fn commit(&self, args: Option<FlagArgs>, attempt: &Attempt, guard: &Guard<'_>) -> Step {
        let record = match args.and_then(|a| self.new_flag(a, guard)) {
            Some(r) => r,
            None => {
                for &n in &attempt.fresh {
                    self.free_unpublished(n);
                }
                return Step::Retry;
            }
        };
        if let Some(case) = attempt.case {
            self.instruments.replace_case(case);
        }
        crate::chaos::point();
        // SAFETY: the record was just allocated and is retired below.
        let rec = unsafe { &*record };
        let done = self.help(rec, guard);
        rec.outcome.store(
            if done {
                OUTCOME_SUCCESS
            } else {
                OUTCOME_FAILURE
            },
            Relaxed,
        );
        // success: fresh nodes keep their reference as tree links, removed
        // nodes lose theirs; failure: fresh nodes were never linked
        let drop_refs = if done {
            &attempt.removed
        } else {
            &attempt.fresh
        };
        for &n in drop_refs {
            self.release(n, guard);
        }
        rec.mark_retired();
        // SAFETY: help has returned, so the record no longer sits in any
        // reachable info slot and cannot be installed again.
        unsafe { guard.defer(record as *mut (), super::free_record) };
        if done {
            Step::Done(true)
        } else {
            Step::Retry
        }
    }

    fn insert_attempt(&self, v: &Key, guard: &Guard<'_>, attempt: &mut Attempt) -> Step {
        let s = self.search(v, guard);
        if key_in_trie(s.node, v, s.rmvd) {
            return Step::Done(false);
        }
        let node_info = s.node.info();
        let copy = self.alloc_copy(s.node);
        let leaf = self.alloc_leaf(v);
        attempt.fresh.extend([copy, leaf]);
        let Some(new_node) = self.create_node(
            node_ref(copy, guard),
            node_ref(leaf, guard),
            Some(node_info),
            guard,
        ) else {
            return self.commit(None, attempt, guard);
        };
        attempt.fresh.push(new_node);
        let (p, node) = (ptr_of(s.p), ptr_of(s.node));
        attempt.removed.push(node);
        let (flag, old_info) = if s.node.leaf {
            (av![p], av![s.p_info])
        } else {
            (av![p, node], av![s.p_info, node_info])
        };
        let args = FlagArgs {
            flag,
            old_info,
            unflag: av![p],
            p_node: av![p],
            old_child: av![node],
            new_child: av![new_node],
            rmv_leaf: std::ptr::null_mut(),
        };
        self.commit(Some(args), attempt, guard)
    }

    fn delete_attempt(&self, v: &Key, guard: &Guard<'_>, attempt: &mut Attempt) -> Step {
        let s = self.search(v, guard);
        if !key_in_trie(s.node, v, s.rmvd) {
            return Step::Done(false);
        }
        let sibling = s.p.child(1 - v.bit(s.p.label.len() + 1));
        let (Some(gp), Some(gp_info)) = (s.gp, s.gp_info) else {
            return Step::Retry;
        };
        let (gp, p) = (ptr_of(gp), ptr_of(s.p));
        attempt.removed.extend([p, ptr_of(s.node)]);
        let args = FlagArgs {
            flag: av![gp, p],
            old_info: av![gp_info, s.p_info],
            unflag: av![gp],
            p_node: av![gp],
            old_child: av![p],
            new_child: av![sibling],
            rmv_leaf: std::ptr::null_mut(),
        };
        self.commit(Some(args), attempt, guard)
    }

    fn replace_attempt(
        &self,
        v_d: &Key,
        v_i: &Key,
        guard: &Guard<'_>,
        attempt: &mut Attempt,
    ) -> Step {
        let d = self.search(v_d, guard);
        if !key_in_trie(d.node, v_d, d.rmvd) {
            return Step::Done(false);
        }
        crate::chaos::point();
        let i = self.search(v_i, guard);
        if key_in_trie(i.node, v_i, i.rmvd) {
            return Step::Done(false);
        }
        let node_info_i = i.node.info();
        let sibling_d = d.p.child(1 - v_d.bit(d.p.label.len() + 1));

        let (p_d, node_d) = (ptr_of(d.p), ptr_of(d.node));
        let (p_i, node_i) = (ptr_of(i.p), ptr_of(i.node));
        let gp_d = d.gp.map(ptr_of);
        let null = std::ptr::null_mut();

        let general =
            gp_d.filter(|&g| node_i != node_d && node_i != p_d && node_i != g && p_i != p_d);
        if let Some(gp_d) = general {
            attempt.case = Some(ReplaceCase::General);
            let gp_info_d = d.gp_info.unwrap();
            let copy = self.alloc_copy(i.node);
            let leaf = self.alloc_leaf(v_i);
            attempt.fresh.extend([copy, leaf]);
            let Some(new_node) = self.create_node(
                node_ref(copy, guard),
                node_ref(leaf, guard),
                Some(node_info_i),
                guard,
            ) else {
                return self.commit(None, attempt, guard);
            };
            attempt.fresh.push(new_node);
            attempt.removed.extend([node_i, p_d, node_d]);
            let (flag, old_info) = if i.node.leaf {
                (av![gp_d, p_d, p_i], av![gp_info_d, d.p_info, i.p_info])
            } else {
                (
                    av![gp_d, p_d, p_i, node_i],
                    av![gp_info_d, d.p_info, i.p_info, node_info_i],
                )
            };
            let args = FlagArgs {
                flag,
                old_info,
                unflag: av![gp_d, p_i],
                p_node: av![p_i, gp_d],
                old_child: av![node_i, p_d],
                new_child: av![new_node, sibling_d],
                rmv_leaf: node_d,
            };
            self.commit(Some(args), attempt, guard)
        } else if node_i == node_d {
            attempt.case = Some(ReplaceCase::SameLeaf);
            let leaf = self.alloc_leaf(v_i);
            attempt.fresh.push(leaf);
            attempt.removed.push(node_d);
            let args = FlagArgs {
                flag: av![p_d],
                old_info: av![d.p_info],
                unflag: av![p_d],
                p_node: av![p_d],
                old_child: av![node_i],
                new_child: av![leaf],
                rmv_leaf: null,
            };
            self.commit(Some(args), attempt, guard)
        } else if (node_i == p_d && Some(p_i) == gp_d) || (gp_d.is_some() && p_i == p_d) {
            attempt.case = Some(if node_i == p_d {
                ReplaceCase::ParentIsTarget
            } else {
                ReplaceCase::SharedParent
            });
            let gp_d = gp_d.unwrap();
            let gp_info_d = d.gp_info.unwrap();
            let sibling = node_ref(sibling_d, guard);
            let leaf = self.alloc_leaf(v_i);
            attempt.fresh.push(leaf);
            let Some(new_node) =
                self.create_node(sibling, node_ref(leaf, guard), Some(sibling.info()), guard)
            else {
                return self.commit(None, attempt, guard);
            };
            attempt.fresh.push(new_node);
            attempt.removed.extend([p_d, node_d]);
            let args = FlagArgs {
                flag: av![gp_d, p_d],
                old_info: av![gp_info_d, d.p_info],
                unflag: av![gp_d],
                p_node: av![gp_d],
                old_child: av![p_d],
                new_child: av![new_node],
                rmv_leaf: null,
            };
            self.commit(Some(args), attempt, guard)
        } else if Some(node_i) == gp_d {
            attempt.case = Some(ReplaceCase::GrandparentIsTarget);
            let gp = d.gp.unwrap();
            let gp_d = ptr_of(gp);
            let gp_info_d = d.gp_info.unwrap();
            let p_sibling = node_ref(gp.child(1 - v_d.bit(gp.label.len() + 1)), guard);
            let Some(new_child) =
                self.create_node(node_ref(sibling_d, guard), p_sibling, None, guard)
            else {
                return Step::Retry;
            };
            let leaf = self.alloc_leaf(v_i);
            attempt.fresh.extend([new_child, leaf]);
            let Some(new_node) = self.create_node(
                node_ref(new_child, guard),
                node_ref(leaf, guard),
                None,
                guard,
            ) else {
                return self.commit(None, attempt, guard);
            };
            attempt.fresh.push(new_node);
            attempt.removed.extend([gp_d, p_d, node_d]);
            let args = FlagArgs {
                flag: av![p_i, gp_d, p_d],
                old_info: av![i.p_info, gp_info_d, d.p_info],
                unflag: av![p_i],
                p_node: av![p_i],
                old_child: av![node_i],
                new_child: av![new_node],
                rmv_leaf: null,
            };
            self.commit(Some(args), attempt, guard)
        } else {
            Step::Retry
        }
    }
}
