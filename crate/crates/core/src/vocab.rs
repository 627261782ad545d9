//! Character vocabulary with reserved padding and unknown ids.

use std::collections::{BTreeSet, HashMap};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const RESERVED: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Vocab {
    /// Distinct characters in code-point order, so the same character set
    /// always produces the same ids.
    pub fn build(chars: impl IntoIterator<Item = char>) -> Self {
        let set: BTreeSet<char> = chars.into_iter().collect();
        Self::from_chars(set.into_iter().collect())
    }

    fn from_chars(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i + RESERVED)).collect();
        Vocab { chars, index }
    }

    /// Inverse of [`Vocab::as_string`].
    pub fn from_string(s: &str) -> Self {
        Self::from_chars(s.chars().collect())
    }

    /// The known characters concatenated in id order.
    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }

    pub fn len(&self) -> usize {
        self.chars.len() + RESERVED
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    pub fn encode(&self, tokens: &[char]) -> Vec<usize> {
        tokens.iter().map(|&c| self.id(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_stable_and_unknown_maps_to_unk() {
        let v = Vocab::build("cabbage,".chars());
        assert_eq!(v.len(), 6 + RESERVED);
        assert_eq!(v.id(','), RESERVED);
        assert_eq!(v.id('a'), RESERVED + 1);
        assert_eq!(v.id('z'), UNK);
        assert_eq!(Vocab::from_string(&v.as_string()), v);
        assert_eq!(v.encode(&['b', 'q']), vec![RESERVED + 2, UNK]);
    }
}
