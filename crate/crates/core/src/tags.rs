//! Label sets shared by the extraction and rewriting taggers.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A finite label set with a dense index, used as CRF / softmax columns.
pub trait Label: Copy + Eq + fmt::Debug {
    const COUNT: usize;

    fn index(self) -> usize;

    fn from_index(index: usize) -> Option<Self>;
}

/// Beginning / Inside / Outside of a heading span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioTag {
    B,
    I,
    O,
}

impl Label for BioTag {
    const COUNT: usize = 3;

    fn index(self) -> usize {
        match self {
            BioTag::B => 0,
            BioTag::I => 1,
            BioTag::O => 2,
        }
    }

    fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(BioTag::B),
            1 => Some(BioTag::I),
            2 => Some(BioTag::O),
            _ => None,
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BioTag::B => "B",
            BioTag::I => "I",
            BioTag::O => "O",
        };
        f.write_str(s)
    }
}

/// Per-character rewrite operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EditTag {
    Keep,
    Delete,
}

impl Label for EditTag {
    const COUNT: usize = 2;

    fn index(self) -> usize {
        match self {
            EditTag::Keep => 0,
            EditTag::Delete => 1,
        }
    }

    fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(EditTag::Keep),
            1 => Some(EditTag::Delete),
            _ => None,
        }
    }
}

impl fmt::Display for EditTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditTag::Keep => f.write_str("KEEP"),
            EditTag::Delete => f.write_str("DELETE"),
        }
    }
}

/// True when the sequence never starts with I and never has I right after O.
pub fn is_valid_bio(tags: &[BioTag]) -> bool {
    let mut prev = BioTag::O;
    for &tag in tags {
        if tag == BioTag::I && prev == BioTag::O {
            return false;
        }
        prev = tag;
    }
    true
}

pub fn to_indices<L: Label>(tags: &[L]) -> Vec<usize> {
    tags.iter().map(|t| t.index()).collect()
}

/// Panics on an out-of-range index; callers pass indices produced by a decoder over `L`.
pub fn from_indices<L: Label>(indices: &[usize]) -> Vec<L> {
    indices
        .iter()
        .map(|&i| L::from_index(i).expect("label index out of range"))
        .collect()
}
