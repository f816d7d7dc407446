//! Command-line front end. Exit codes: 0 success, 1 invariant failure,
//! 2 usage error, 3 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use nbtrie_lincheck::mix::Mix;

use crate::config::WorkloadConfig;
use crate::report::{self, Row};
use crate::trial::run_trial;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

/// Timed mixed-workload benchmark for the non-blocking Patricia trie.
///
/// Every combination of the comma-separated --threads, --range and --mix
/// values is run for --trials trials.
#[derive(Debug, Parser)]
#[command(name = "nbtrie-bench", version)]
pub struct Args {
    /// Worker thread counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub threads: Vec<usize>,
    /// Length of each timed trial in seconds.
    #[arg(long, default_value_t = 4.0)]
    pub secs: f64,
    /// Untimed run-in before each trial's window, in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub warmup: f64,
    /// Key width in bits.
    #[arg(long, default_value_t = 64)]
    pub key_bits: u8,
    /// Key ranges; keys are drawn from 1..=R.
    #[arg(long, value_delimiter = ',', default_value = "100,1000000")]
    pub range: Vec<u64>,
    /// Operation mixes as i:d:r:f percentages or names like i5-d5-f90.
    #[arg(long, value_delimiter = ',', default_value = "5:5:0:90")]
    pub mix: Vec<Mix>,
    #[arg(long, default_value_t = 8)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Draw keys in runs of L consecutive values from a random start.
    #[arg(long, value_name = "L")]
    pub runs: Option<u64>,
    /// Write one row per trial to this file.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Bring each trie to a half-full steady state before timing.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub prefill: Switch,
    /// Check per-key update counts against the final set (always on for
    /// mixes with replace).
    #[arg(long)]
    pub parity: bool,
}

impl Args {
    pub fn configs(&self) -> Vec<WorkloadConfig> {
        let mut out = Vec::new();
        for &range in &self.range {
            for &mix in &self.mix {
                for &threads in &self.threads {
                    out.push(WorkloadConfig {
                        threads,
                        secs: self.secs,
                        warmup: self.warmup,
                        key_bits: self.key_bits,
                        range,
                        mix,
                        trials: self.trials,
                        seed: self.seed,
                        runs: self.runs,
                        prefill: self.prefill == Switch::On,
                        parity: self.parity || mix.replace > 0,
                    });
                }
            }
        }
        out
    }
}

/// Parses `argv`, runs the grid and returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let configs = args.configs();
    for c in &configs {
        if let Err(e) = c.validate() {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    }
    if configs.is_empty() {
        let _ = writeln!(err, "error: empty grid");
        return EXIT_USAGE;
    }

    // open the output first so a bad path fails before the long part
    let csv_file = match &args.csv {
        Some(path) => match std::fs::File::create(path) {
            Ok(f) => Some(f),
            Err(e) => {
                let _ = writeln!(err, "error: creating {}: {e}", path.display());
                return EXIT_IO;
            }
        },
        None => None,
    };

    let mut rows = Vec::new();
    let _ = writeln!(
        out,
        "threads range mix trial ops secs throughput final_size"
    );
    for cfg in &configs {
        for trial in 0..cfg.trials {
            match run_trial(cfg, trial) {
                Ok(r) => {
                    let _ = writeln!(
                        out,
                        "{} {} {} {} {} {:.3} {:.0} {}",
                        r.threads,
                        r.range,
                        r.mix,
                        r.trial,
                        r.ops(),
                        r.secs,
                        r.throughput,
                        r.final_size
                    );
                    rows.push(Row::from(&r));
                }
                Err(e) => {
                    let _ = writeln!(
                        err,
                        "error: {} threads, range {}, {}, trial {trial}: {e}",
                        cfg.threads, cfg.range, cfg.mix
                    );
                    return if e.is_invariant() {
                        EXIT_INVARIANT
                    } else {
                        EXIT_USAGE
                    };
                }
            }
        }
    }

    let _ = writeln!(out, "\nthreads range mix trials mean stddev");
    for s in report::summarize(&rows) {
        let sd = s.stddev.map_or("-".to_string(), |v| format!("{v:.0}"));
        let _ = writeln!(
            out,
            "{} {} {} {} {:.0} {}",
            s.threads, s.range, s.mix, s.trials, s.mean, sd
        );
    }
    if let Some(file) = csv_file {
        if let Err(e) = report::write_csv_to(file, &rows) {
            let _ = writeln!(err, "error: writing csv: {e}");
            return EXIT_IO;
        }
    }
    EXIT_OK
}
