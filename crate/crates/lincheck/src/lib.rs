//! Linearizability and invariant testing for `nbtrie`.

pub mod audit;
pub mod campaign;
pub mod checker;
pub mod history;
pub mod mix;
pub mod oracle;
pub mod workload;

pub use audit::{quiescent_audit, AuditError, AuditReport, ReachabilityTracker, Violation};
pub use campaign::{run_campaign, CampaignReport, CampaignSpec};
pub use checker::{check_linearizable, Checker, Verdict};
pub use history::{Call, Event, History, Operation, Phase};
pub use mix::Mix;
pub use oracle::OracleSet;
pub use workload::{run_workload, WorkloadSpec};

pub use nbtrie::Trie;
