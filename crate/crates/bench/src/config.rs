use std::time::Duration;

use nbtrie_lincheck::mix::Mix;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadConfig {
    pub threads: usize,
    /// Length of the timed window.
    pub secs: f64,
    /// Untimed run-in before the window opens.
    pub warmup: f64,
    pub key_bits: u8,
    /// Keys are drawn from `1..=range`.
    pub range: u64,
    pub mix: Mix,
    pub trials: usize,
    pub seed: u64,
    /// Draw keys in runs of this many consecutive values instead of uniformly.
    pub runs: Option<u64>,
    pub prefill: bool,
    /// Track per-key update counts and check them against the final set.
    pub parity: bool,
}

impl Default for WorkloadConfig {
    fn default() -> WorkloadConfig {
        WorkloadConfig {
            threads: 1,
            secs: 4.0,
            warmup: 0.0,
            key_bits: 64,
            range: 1_000_000,
            mix: Mix::READ_MOSTLY,
            trials: 8,
            seed: 1,
            runs: None,
            prefill: true,
            parity: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("thread count must be at least 1")]
    Threads,
    #[error("trial count must be at least 1")]
    Trials,
    #[error("durations must be finite and non-negative, got {0}")]
    Secs(f64),
    #[error("key width must be between 2 and 64 bits, got {0}")]
    KeyBits(u8),
    #[error("range {range} does not fit in {bits}-bit keys without the sentinels (max {max})")]
    Range { range: u64, bits: u8, max: u128 },
    #[error("a mix with replace needs a range of at least 2")]
    ReplaceRange,
    #[error("run length must be at least 1")]
    Runs,
}

impl WorkloadConfig {
    /// Largest usable range for `bits`-bit keys: everything but the two sentinels.
    pub fn max_range(bits: u8) -> u128 {
        (1u128 << bits) - 2
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.threads == 0 {
            return Err(ConfigError::Threads);
        }
        if self.trials == 0 {
            return Err(ConfigError::Trials);
        }
        for s in [self.secs, self.warmup] {
            if !s.is_finite() || s < 0.0 {
                return Err(ConfigError::Secs(s));
            }
        }
        if !(2..=64).contains(&self.key_bits) {
            return Err(ConfigError::KeyBits(self.key_bits));
        }
        let max = Self::max_range(self.key_bits);
        if self.range == 0 || self.range as u128 > max {
            return Err(ConfigError::Range {
                range: self.range,
                bits: self.key_bits,
                max,
            });
        }
        if self.mix.replace > 0 && self.range < 2 {
            return Err(ConfigError::ReplaceRange);
        }
        if self.runs == Some(0) {
            return Err(ConfigError::Runs);
        }
        Ok(())
    }

    pub fn window(&self) -> Duration {
        Duration::from_secs_f64(self.secs)
    }

    pub fn warmup_window(&self) -> Duration {
        Duration::from_secs_f64(self.warmup)
    }
}
