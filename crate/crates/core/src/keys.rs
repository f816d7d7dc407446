//! Fixed-width keys and variable-length bit-string labels.
//!
//! Bits are numbered from 1, most significant first. A label of length `n`
//! is stored left-aligned in a `u64` with every bit past position `n` zero,
//! so prefix tests and common-prefix computations reduce to a mask and a
//! `leading_zeros`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::TrieError;

/// Widest key a trie can be built for.
pub const MAX_WIDTH: u8 = 64;

#[inline]
const fn top_mask(len: u8) -> u64 {
    if len == 0 {
        0
    } else {
        !0u64 << (64 - len as u32)
    }
}

/// A bit string of 0 to 64 bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Label {
    bits: u64,
    len: u8,
}

impl Label {
    /// The empty string, carried by the root.
    pub const EMPTY: Label = Label { bits: 0, len: 0 };

    /// Builds a label from the low `len` bits of `value`.
    ///
    /// Panics if `len > 64` or `value` does not fit in `len` bits.
    pub fn new(value: u64, len: u8) -> Label {
        assert!(len <= MAX_WIDTH, "label length {len} exceeds {MAX_WIDTH}");
        if len == 0 {
            assert_eq!(value, 0, "empty label carries no bits");
            return Label::EMPTY;
        }
        assert!(
            len == 64 || value >> len == 0,
            "value {value:#x} does not fit in {len} bits"
        );
        Label {
            bits: value << (64 - len as u32),
            len,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The label read back as an integer of `len` bits.
    pub fn value(&self) -> u64 {
        if self.len == 0 {
            0
        } else {
            self.bits >> (64 - self.len as u32)
        }
    }

    /// The `i`-th most significant bit, 1-based.
    #[inline]
    pub fn bit(&self, i: usize) -> usize {
        assert!(
            (1..=self.len()).contains(&i),
            "bit index {i} out of range for a {}-bit label",
            self.len
        );
        ((self.bits >> (64 - i)) & 1) as usize
    }

    /// True iff `self` equals the first `self.len()` bits of `other`.
    #[inline]
    pub fn is_prefix_of(&self, other: &Label) -> bool {
        self.len <= other.len && (self.bits ^ other.bits) & top_mask(self.len) == 0
    }

    /// The longest label that is a prefix of both.
    #[inline]
    pub fn common_prefix(&self, other: &Label) -> Label {
        let shared = ((self.bits ^ other.bits).leading_zeros() as u8)
            .min(self.len)
            .min(other.len);
        Label {
            bits: self.bits & top_mask(shared),
            len: shared,
        }
    }

    /// `self` with one more bit appended.
    pub fn push(&self, bit: usize) -> Label {
        assert!(self.len < MAX_WIDTH, "label already holds 64 bits");
        assert!(bit <= 1);
        let len = self.len + 1;
        Label {
            bits: self.bits | ((bit as u64) << (64 - len as u32)),
            len,
        }
    }
}

/// Shorter-prefix-first lexicographic order: bits are compared from the
/// front and a proper prefix sorts before its extensions.
impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        let shared = top_mask(self.len.min(other.len));
        (self.bits & shared)
            .cmp(&(other.bits & shared))
            .then(self.len.cmp(&other.len))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len == 0 {
            return f.write_str("ε");
        }
        for i in 1..=self.len() {
            f.write_str(if self.bit(i) == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Label({self})")
    }
}

/// Parses a string of `0`/`1` characters; `""` and `"ε"` give the empty label.
impl FromStr for Label {
    type Err = TrieError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || s == "ε" {
            return Ok(Label::EMPTY);
        }
        if s.len() > MAX_WIDTH as usize {
            return Err(TrieError::BadLabel(s.to_owned()));
        }
        let mut label = Label::EMPTY;
        for c in s.chars() {
            label = match c {
                '0' => label.push(0),
                '1' => label.push(1),
                _ => return Err(TrieError::BadLabel(s.to_owned())),
            };
        }
        Ok(label)
    }
}

/// An element of the key universe: exactly `width` bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Key(Label);

impl Key {
    pub fn new(value: u64, width: u8) -> Result<Key, TrieError> {
        if width == 0 || width > MAX_WIDTH {
            return Err(TrieError::BadWidth(width));
        }
        if width < 64 && value >> width != 0 {
            return Err(TrieError::OutOfRange { key: value, width });
        }
        Ok(Key(Label::new(value, width)))
    }

    #[inline]
    pub fn width(&self) -> u8 {
        self.0.len
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.0.value()
    }

    #[inline]
    pub fn label(&self) -> &Label {
        &self.0
    }

    #[inline]
    pub fn bit(&self, i: usize) -> usize {
        self.0.bit(i)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Key({})", self.0)
    }
}

/// The two reserved keys `0^width` and `1^width`.
pub fn sentinels(width: u8) -> (Key, Key) {
    assert!((1..=MAX_WIDTH).contains(&width), "bad key width {width}");
    let ones = if width == 64 { !0 } else { (1u64 << width) - 1 };
    (Key(Label::new(0, width)), Key(Label::new(ones, width)))
}
