//! Runtime checks of the CAS discipline and the search bound.
//!
//! These counters are not part of the set semantics; the test harness and
//! the benchmark read them to assert that no discipline violation occurred.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering::*};

use crate::trie::node::{FlagRecord, ReplaceCase, OUTCOME_FAILURE, OUTCOME_SUCCESS};

#[derive(Default, Debug)]
pub(crate) struct Instruments {
    records: AtomicU64,
    records_audited: AtomicU64,
    // a record whose child CAS on one slot succeeded more than once
    child_cas_repeat: AtomicU64,
    // a successful update whose record changed a slot zero times
    child_cas_missing: AtomicU64,
    // a failed update whose record changed a slot
    child_cas_on_failure: AtomicU64,
    // a flag CAS won before all earlier targets were seen flagged
    flag_order: AtomicU64,
    flag_cas_repeat: AtomicU64,
    // flag targets out of label order after sorting
    flag_unsorted: AtomicU64,
    // distinct flag targets with equal labels, ordered by identity
    flag_label_ties: AtomicU64,
    search_max: AtomicUsize,
    search_over_width: AtomicU64,
    helps: AtomicU64,
    stale_refs: AtomicU64,
    replace_cases: [AtomicU64; 5],
}

impl Instruments {
    pub(crate) fn record_created(&self) {
        self.records.fetch_add(1, Relaxed);
    }

    pub(crate) fn flag_unsorted(&self) {
        self.flag_unsorted.fetch_add(1, Relaxed);
    }

    pub(crate) fn flag_label_tie(&self) {
        self.flag_label_ties.fetch_add(1, Relaxed);
    }

    pub(crate) fn stale_ref(&self) {
        self.stale_refs.fetch_add(1, Relaxed);
    }

    pub(crate) fn help_called(&self) {
        self.helps.fetch_add(1, Relaxed);
    }

    pub(crate) fn replace_case(&self, case: ReplaceCase) {
        self.replace_cases[case.index()].fetch_add(1, Relaxed);
    }

    #[inline]
    pub(crate) fn search_finished(&self, iterations: usize, width: usize) {
        if iterations > self.search_max.load(Relaxed) {
            self.search_max.fetch_max(iterations, Relaxed);
        }
        if iterations > width {
            self.search_over_width.fetch_add(1, Relaxed);
        }
    }

    /// A flag CAS at `index` succeeded.
    pub(crate) fn flag_won(&self, record: &FlagRecord, index: usize) {
        let confirmed = record.confirmed.load(Relaxed);
        let below = (1u8 << index) - 1;
        if confirmed & below != below {
            self.flag_order.fetch_add(1, Relaxed);
        }
        if record.flag_wins[index].fetch_add(1, Relaxed) > 0 {
            self.flag_cas_repeat.fetch_add(1, Relaxed);
        }
    }

    /// Runs when the record is freed, after every helper has left it.
    pub(crate) fn audit_record(&self, record: &FlagRecord) {
        self.records_audited.fetch_add(1, Relaxed);
        let outcome = record.outcome.load(Relaxed);
        for slot in &record.child_wins[..record.p_node.len()] {
            let wins = slot.load(Relaxed);
            if wins > 1 {
                self.child_cas_repeat.fetch_add(1, Relaxed);
            }
            if outcome == OUTCOME_SUCCESS && wins != 1 {
                self.child_cas_missing.fetch_add(1, Relaxed);
            }
            if outcome == OUTCOME_FAILURE && wins != 0 {
                self.child_cas_on_failure.fetch_add(1, Relaxed);
            }
        }
    }

    pub(crate) fn report(&self) -> InstrumentReport {
        InstrumentReport {
            records: self.records.load(SeqCst),
            records_audited: self.records_audited.load(SeqCst),
            child_cas_repeat: self.child_cas_repeat.load(SeqCst),
            child_cas_missing: self.child_cas_missing.load(SeqCst),
            child_cas_on_failure: self.child_cas_on_failure.load(SeqCst),
            flag_order_violations: self.flag_order.load(SeqCst),
            flag_cas_repeat: self.flag_cas_repeat.load(SeqCst),
            flag_unsorted: self.flag_unsorted.load(SeqCst),
            flag_label_ties: self.flag_label_ties.load(SeqCst),
            search_max_iterations: self.search_max.load(SeqCst),
            search_over_width: self.search_over_width.load(SeqCst),
            helps: self.helps.load(SeqCst),
            stale_refs: self.stale_refs.load(SeqCst),
            replace_cases: std::array::from_fn(|i| self.replace_cases[i].load(SeqCst)),
        }
    }
}

/// Point-in-time copy of the instrumentation counters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InstrumentReport {
    /// Flag records created.
    pub records: u64,
    /// Flag records freed and checked so far.
    pub records_audited: u64,
    pub child_cas_repeat: u64,
    pub child_cas_missing: u64,
    pub child_cas_on_failure: u64,
    pub flag_order_violations: u64,
    pub flag_cas_repeat: u64,
    pub flag_unsorted: u64,
    /// Records naming two distinct nodes with the same label (a stale node
    /// and its replacement). Not a violation: such a record cannot flag both.
    pub flag_label_ties: u64,
    /// Longest search loop observed.
    pub search_max_iterations: usize,
    pub search_over_width: u64,
    pub helps: u64,
    /// Attempts abandoned because a node they named was already retired.
    pub stale_refs: u64,
    /// Records built per replace arm, indexed like [`ReplaceCase::ALL`].
    pub replace_cases: [u64; 5],
}

impl InstrumentReport {
    /// Violations of the one-winner-per-slot rule, in any form.
    pub fn child_cas_violations(&self) -> u64 {
        self.child_cas_repeat + self.child_cas_missing + self.child_cas_on_failure
    }

    /// Violations of the ascending flag discipline, in any form.
    pub fn flag_violations(&self) -> u64 {
        self.flag_order_violations + self.flag_cas_repeat + self.flag_unsorted
    }

    pub fn replace_case_count(&self, case: ReplaceCase) -> u64 {
        self.replace_cases[case.index()]
    }
}
