//! Timed mixed-workload benchmark for the trie: prefill, worker threads
//! sharing one trie for a fixed window, end-of-trial audits, CSV output.

pub mod cli;
pub mod config;
pub mod gen;
pub mod prefill;
pub mod report;
pub mod trial;

pub use config::{ConfigError, WorkloadConfig};
pub use report::{read_csv, summarize, write_csv, Row, Summary, HEADER};
pub use trial::{run_counted, run_trial, CountedRun, Counts, TrialError, TrialResult};
