//! A non-blocking Patricia trie implementing a concurrent set of
//! fixed-width binary keys.
//!
//! ```
//! let set = nbtrie::Trie::new(16).unwrap();
//! assert!(set.insert(5).unwrap());
//! assert!(set.replace(5, 9).unwrap());
//! assert!(!set.find(5).unwrap());
//! assert!(set.find(9).unwrap());
//! ```

pub mod batch;
pub mod chaos;
mod error;
mod ids;
pub mod keys;
pub mod reclaim;
pub mod snapshot;
mod trie;

pub use error::TrieError;
pub use keys::{sentinels, Key, Label, MAX_WIDTH};
pub use snapshot::{InfoState, SnapNode, Snapshot};
pub use trie::{
    key_in_trie, logically_removed, FlagRecord, Info, InstrumentReport, Node, OpResult,
    ReplaceCase, SearchResult, Trie, TrieOptions,
};
