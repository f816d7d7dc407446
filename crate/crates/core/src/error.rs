use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrieError {
    /// `0^width` and `1^width` are permanent sentinel leaves.
    #[error("key {0:#x} is reserved as a sentinel")]
    ReservedKey(u64),
    #[error("key {key:#x} does not fit in {width} bits")]
    OutOfRange { key: u64, width: u8 },
    #[error("replace needs two distinct keys, got {0:#x} twice")]
    SameKey(u64),
    #[error("key width must be between 1 and 64, got {0}")]
    BadWidth(u8),
    #[error("not a bit string: {0:?}")]
    BadLabel(String),
}
