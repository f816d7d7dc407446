//! Operation mixes: percentages of insert, delete, replace and find.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Mix {
    pub insert: u32,
    pub delete: u32,
    pub replace: u32,
    pub find: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MixError {
    #[error("mix {0:?}: expected i:d:r:f or a name like i5-d5-f90")]
    Syntax(String),
    #[error("mix {0:?}: percentages sum to {1}, not 100")]
    Sum(String, u32),
}

/// The kind of operation a mix roll selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pick {
    Insert,
    Delete,
    Replace,
    Find,
}

impl Mix {
    pub const fn new(insert: u32, delete: u32, replace: u32, find: u32) -> Mix {
        Mix {
            insert,
            delete,
            replace,
            find,
        }
    }

    pub const READ_MOSTLY: Mix = Mix::new(5, 5, 0, 90);
    pub const UPDATE_ONLY: Mix = Mix::new(50, 50, 0, 0);
    pub const REPLACE_HEAVY: Mix = Mix::new(10, 10, 80, 0);

    /// Maps a roll in `0..100` to an operation kind.
    pub fn pick(&self, roll: u32) -> Pick {
        debug_assert!(roll < 100);
        if roll < self.insert {
            Pick::Insert
        } else if roll < self.insert + self.delete {
            Pick::Delete
        } else if roll < self.insert + self.delete + self.replace {
            Pick::Replace
        } else {
            Pick::Find
        }
    }
}

/// Short name such as `i5-d5-f90`; zero parts other than the find share are omitted.
impl fmt::Display for Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (tag, v) in [("i", self.insert), ("d", self.delete), ("r", self.replace)] {
            if v > 0 {
                parts.push(format!("{tag}{v}"));
            }
        }
        parts.push(format!("f{}", self.find));
        f.write_str(&parts.join("-"))
    }
}

/// Accepts `i:d:r:f` (four numbers) or a name like `i10-d10-r80-f0`.
impl FromStr for Mix {
    type Err = MixError;

    fn from_str(s: &str) -> Result<Mix, MixError> {
        let syntax = || MixError::Syntax(s.to_string());
        let mut v = [0u32; 4];
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 4 {
                return Err(syntax());
            }
            for (slot, p) in v.iter_mut().zip(parts) {
                *slot = p.trim().parse().map_err(|_| syntax())?;
            }
        } else {
            let mut seen = [false; 4];
            for part in s.split('-') {
                let idx = match part.chars().next() {
                    Some('i') => 0,
                    Some('d') => 1,
                    Some('r') => 2,
                    Some('f') => 3,
                    _ => return Err(syntax()),
                };
                if seen[idx] {
                    return Err(syntax());
                }
                seen[idx] = true;
                v[idx] = part[1..].parse().map_err(|_| syntax())?;
            }
        }
        let sum: u32 = v.iter().sum();
        if sum != 100 {
            return Err(MixError::Sum(s.to_string(), sum));
        }
        Ok(Mix::new(v[0], v[1], v[2], v[3]))
    }
}
