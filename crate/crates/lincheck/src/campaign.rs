//! Many small recorded runs, each checked for linearizability, with the
//! trie's instrumentation accumulated across runs.

use std::path::PathBuf;

use nbtrie::{InstrumentReport, Trie};

use crate::audit::quiescent_audit;
use crate::checker::{Checker, Verdict};
use crate::history::History;
use crate::mix::Mix;
use crate::oracle::OracleSet;
use crate::workload::{run_workload, WorkloadSpec};

#[derive(Clone, Debug)]
pub struct CampaignSpec {
    pub histories: usize,
    pub threads: usize,
    pub ops_per_thread: usize,
    pub keys: Vec<u64>,
    pub width: u8,
    /// Cycled through, one mix per history.
    pub mixes: Vec<Mix>,
    pub seed: u64,
    pub budget: usize,
    /// Where failing histories are written, if anywhere.
    pub persist: Option<PathBuf>,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        CampaignSpec {
            histories: 10_000,
            threads: 3,
            ops_per_thread: 8,
            keys: vec![1, 2, 3, 4],
            width: 3,
            mixes: vec![
                Mix::READ_MOSTLY,
                Mix::UPDATE_ONLY,
                Mix::REPLACE_HEAVY,
                Mix::new(25, 25, 25, 25),
            ],
            seed: 0,
            budget: crate::checker::DEFAULT_BUDGET,
            persist: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Failure {
    pub seed: u64,
    pub mix: Mix,
    pub history: History,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct CampaignReport {
    pub histories: usize,
    pub linearizable: usize,
    pub inconclusive: usize,
    pub failures: Vec<Failure>,
    /// Histories in which at least two operations overlapped in time.
    pub overlapping: usize,
    pub instruments: InstrumentReport,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.inconclusive == 0 && self.linearizable == self.histories
    }

    fn merge(mut self, other: CampaignReport) -> CampaignReport {
        self.histories += other.histories;
        self.linearizable += other.linearizable;
        self.inconclusive += other.inconclusive;
        self.overlapping += other.overlapping;
        self.failures.extend(other.failures);
        self.instruments = add(&self.instruments, &other.instruments);
        self
    }
}

/// Sums counters; keeps the larger search maximum.
pub fn add(a: &InstrumentReport, b: &InstrumentReport) -> InstrumentReport {
    InstrumentReport {
        records: a.records + b.records,
        records_audited: a.records_audited + b.records_audited,
        child_cas_repeat: a.child_cas_repeat + b.child_cas_repeat,
        child_cas_missing: a.child_cas_missing + b.child_cas_missing,
        child_cas_on_failure: a.child_cas_on_failure + b.child_cas_on_failure,
        flag_order_violations: a.flag_order_violations + b.flag_order_violations,
        flag_cas_repeat: a.flag_cas_repeat + b.flag_cas_repeat,
        flag_unsorted: a.flag_unsorted + b.flag_unsorted,
        flag_label_ties: a.flag_label_ties + b.flag_label_ties,
        search_max_iterations: a.search_max_iterations.max(b.search_max_iterations),
        search_over_width: a.search_over_width + b.search_over_width,
        helps: a.helps + b.helps,
        stale_refs: a.stale_refs + b.stale_refs,
        replace_cases: std::array::from_fn(|i| a.replace_cases[i] + b.replace_cases[i]),
    }
}

fn overlaps(h: &History) -> bool {
    let mut open = 0;
    h.events.iter().any(|e| {
        match e.phase {
            crate::history::Phase::Invoke => open += 1,
            crate::history::Phase::Respond(_) => open -= 1,
        }
        open > 1
    })
}

/// One recorded run: workload, end-of-run audit against the history's
/// final state, and the linearizability verdict.
pub fn run_one(spec: &CampaignSpec, index: usize) -> CampaignReport {
    let mix = spec.mixes[index % spec.mixes.len()];
    let seed = spec.seed.wrapping_add(index as u64);
    let work = WorkloadSpec {
        threads: spec.threads,
        ops_per_thread: spec.ops_per_thread,
        keys: spec.keys.clone(),
        mix,
        seed,
        jitter: true,
    };
    let trie = Trie::new(spec.width).expect("valid width");
    let history = run_workload(&trie, &work);
    let mut report = CampaignReport {
        histories: 1,
        overlapping: usize::from(overlaps(&history)),
        ..CampaignReport::default()
    };
    let mut reason = None;
    match Checker::with_budget(spec.budget).check(&history) {
        Verdict::Linearizable { order } => {
            report.linearizable = 1;
            // the final contents must be those of the witness order
            let ops = history.operations();
            let mut set = OracleSet::new();
            for i in order {
                set.apply(ops[i].call);
            }
            match quiescent_audit(&trie) {
                Ok(a) if a.keys == set.keys().collect::<Vec<_>>() => {}
                Ok(a) => reason = Some(format!("final keys {:?}, witness gives {:?}", a.keys, set)),
                Err(e) => reason = Some(e.to_string()),
            }
        }
        Verdict::Inconclusive { explored } => {
            report.inconclusive = 1;
            reason = Some(format!("inconclusive after {explored} states"));
        }
        Verdict::Violation { prefix } => {
            reason = Some(format!("not linearizable; minimal prefix:\n{prefix}"));
        }
    }
    trie.collect();
    report.instruments = trie.instruments();
    if let Some(reason) = reason {
        if report.linearizable == 1 {
            report.linearizable = 0;
        }
        if let Some(dir) = &spec.persist {
            let _ = std::fs::create_dir_all(dir);
            let _ = std::fs::write(dir.join(format!("history-{seed}.txt")), history.to_text());
        }
        report.failures.push(Failure {
            seed,
            mix,
            history,
            reason,
        });
    }
    report
}

pub fn run_campaign_seq(spec: &CampaignSpec) -> CampaignReport {
    (0..spec.histories)
        .map(|i| run_one(spec, i))
        .fold(CampaignReport::default(), CampaignReport::merge)
}

#[cfg(feature = "parallel")]
pub fn run_campaign_par(spec: &CampaignSpec) -> CampaignReport {
    use rayon::prelude::*;
    (0..spec.histories)
        .into_par_iter()
        .map(|i| run_one(spec, i))
        .reduce(CampaignReport::default, CampaignReport::merge)
}

pub fn run_campaign(spec: &CampaignSpec) -> CampaignReport {
    #[cfg(feature = "parallel")]
    return run_campaign_par(spec);
    #[cfg(not(feature = "parallel"))]
    return run_campaign_seq(spec);
}
