//! Linearizability checking by depth-first search over linearization
//! orders, pruned by memoizing (linearized set, abstract state) pairs.

use std::collections::HashSet;

use crate::history::{History, Operation};
use crate::oracle::OracleSet;

/// States explored before giving up with [`Verdict::Inconclusive`].
pub const DEFAULT_BUDGET: usize = 1_000_000;

/// Longest history the checker accepts, in operations.
pub const MAX_OPERATIONS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// `order` lists operation indices (see [`History::operations`]) in
    /// linearization order. Pending operations appear only if included.
    Linearizable {
        order: Vec<usize>,
    },
    /// The shortest prefix of the history that is already not linearizable.
    Violation {
        prefix: History,
    },
    Inconclusive {
        explored: usize,
    },
}

impl Verdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Verdict::Linearizable { .. })
    }

    pub fn is_violation(&self) -> bool {
        matches!(self, Verdict::Violation { .. })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Checker {
    pub budget: usize,
}

impl Default for Checker {
    fn default() -> Self {
        Checker {
            budget: DEFAULT_BUDGET,
        }
    }
}

pub fn check_linearizable(h: &History) -> Verdict {
    Checker::default().check(h)
}

enum Search {
    Found(Vec<usize>),
    NotFound,
    OutOfBudget(usize),
}

struct Dfs<'a> {
    ops: &'a [Operation],
    completed: u64,
    seen: HashSet<(u64, OracleSet)>,
    budget: usize,
    order: Vec<usize>,
}

impl Dfs<'_> {
    fn run(&mut self, done: u64, state: &OracleSet) -> Result<bool, ()> {
        if done & self.completed == self.completed {
            return Ok(true);
        }
        if !self.seen.insert((done, state.clone())) {
            return Ok(false);
        }
        if self.seen.len() > self.budget {
            return Err(());
        }
        // an operation may go next only if no remaining completed operation
        // responded before it was invoked
        let horizon = self
            .ops
            .iter()
            .enumerate()
            .filter(|(i, _)| done & (1 << i) == 0)
            .filter_map(|(_, op)| op.responded.map(|(ts, _)| ts))
            .min()
            .unwrap_or(u64::MAX);
        for (i, op) in self.ops.iter().enumerate() {
            if done & (1 << i) != 0 || op.invoked > horizon {
                continue;
            }
            let mut next = state.clone();
            let result = next.apply(op.call);
            if let Some((_, expected)) = op.responded {
                if result != expected {
                    continue;
                }
            }
            self.order.push(i);
            if self.run(done | (1 << i), &next)? {
                return Ok(true);
            }
            self.order.pop();
        }
        Ok(false)
    }
}

impl Checker {
    pub fn with_budget(budget: usize) -> Checker {
        Checker { budget }
    }

    pub fn check(&self, h: &History) -> Verdict {
        match self.search(h) {
            Search::Found(order) => Verdict::Linearizable { order },
            Search::OutOfBudget(explored) => Verdict::Inconclusive { explored },
            Search::NotFound => {
                // shortest failing prefix; prefixes of a linearizable history
                // are linearizable, so the first failure is minimal
                for n in 1..=h.events.len() {
                    let prefix = h.prefix(n);
                    if let Search::NotFound = self.search(&prefix) {
                        return Verdict::Violation { prefix };
                    }
                }
                unreachable!("the full history failed")
            }
        }
    }

    fn search(&self, h: &History) -> Search {
        let ops = h.operations();
        assert!(
            ops.len() <= MAX_OPERATIONS,
            "history has {} operations, limit {MAX_OPERATIONS}",
            ops.len()
        );
        let completed = ops
            .iter()
            .enumerate()
            .filter(|(_, op)| op.responded.is_some())
            .fold(0u64, |m, (i, _)| m | 1 << i);
        let mut dfs = Dfs {
            ops: &ops,
            completed,
            seen: HashSet::new(),
            budget: self.budget,
            order: Vec::new(),
        };
        match dfs.run(0, &OracleSet::new()) {
            Ok(true) => Search::Found(dfs.order),
            Ok(false) => Search::NotFound,
            Err(()) => Search::OutOfBudget(dfs.seen.len()),
        }
    }
}

/// Replays `order` and confirms it is a legal linearization of `h`.
pub fn verify_witness(h: &History, order: &[usize]) -> Result<(), String> {
    let ops = h.operations();
    let mut set = OracleSet::new();
    let mut placed = vec![false; ops.len()];
    for (pos, &i) in order.iter().enumerate() {
        let op = ops.get(i).ok_or(format!("index {i} out of range"))?;
        if placed[i] {
            return Err(format!("operation {i} placed twice"));
        }
        // everything that responded before `op` was invoked must precede it
        if let Some(j) = (0..ops.len()).find(|&j| {
            !placed[j] && j != i && ops[j].responded.is_some_and(|(ts, _)| ts < op.invoked)
        }) {
            return Err(format!(
                "operation {i} at position {pos} precedes {j} in real time"
            ));
        }
        placed[i] = true;
        let got = set.apply(op.call);
        if let Some((_, expected)) = op.responded {
            if got != expected {
                return Err(format!(
                    "operation {i} ({}) returned {expected}, replay gives {got}",
                    op.call
                ));
            }
        }
    }
    if let Some(j) = (0..ops.len()).find(|&j| !placed[j] && ops[j].responded.is_some()) {
        return Err(format!("completed operation {j} missing"));
    }
    Ok(())
}
