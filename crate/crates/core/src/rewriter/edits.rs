use crate::tags::EditTag;
use crate::{Error, Result};

/// The target is not a subsequence of the source, so KEEP/DELETE cannot
/// produce it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Unconvertible;

/// KEEP on the leftmost greedy embedding of `target` in `source`, DELETE
/// elsewhere.
pub fn convert_to_edit_tags(source: &[char], target: &[char]) -> std::result::Result<Vec<EditTag>, Unconvertible> {
    let mut tags = vec![EditTag::Delete; source.len()];
    let mut next = 0;
    for (i, &c) in source.iter().enumerate() {
        if next < target.len() && c == target[next] {
            tags[i] = EditTag::Keep;
            next += 1;
        }
    }
    if next == target.len() {
        Ok(tags)
    } else {
        Err(Unconvertible)
    }
}

/// Result of applying edit tags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Applied {
    pub tokens: Vec<char>,
    /// Every token was deleted and the source was returned instead.
    pub fell_back: bool,
}

/// Keeps the KEEP-tagged tokens in order. An empty result falls back to
/// the untouched source.
pub fn apply_edit_tags(source: &[char], tags: &[EditTag]) -> Result<Applied> {
    if source.len() != tags.len() {
        return Err(Error::LengthMismatch {
            expected: source.len(),
            actual: tags.len(),
        });
    }
    let kept: Vec<char> = source
        .iter()
        .zip(tags)
        .filter(|(_, &t)| t == EditTag::Keep)
        .map(|(&c, _)| c)
        .collect();
    if kept.is_empty() && !source.is_empty() {
        log::warn!("all characters of `{}` deleted; keeping the source", source.iter().collect::<String>());
        return Ok(Applied {
            tokens: source.to_vec(),
            fell_back: true,
        });
    }
    Ok(Applied {
        tokens: kept,
        fell_back: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tags::EditTag::{Delete, Keep};
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn deletes_leading_filler_word() {
        let source = ["also", "today", "we", "talk"];
        let target = ["today", "we", "talk"];
        // one char per word keeps the example at word granularity
        let s: Vec<char> = source.iter().map(|w| w.chars().next().unwrap()).collect();
        let t: Vec<char> = target.iter().map(|w| w.chars().next().unwrap()).collect();
        assert_eq!(convert_to_edit_tags(&s, &t).unwrap(), vec![Delete, Keep, Keep, Keep]);
    }

    #[test]
    fn identity_and_leftmost() {
        assert_eq!(convert_to_edit_tags(&chars("abc"), &chars("abc")).unwrap(), vec![Keep; 3]);
        assert_eq!(convert_to_edit_tags(&chars("aba"), &chars("ab")).unwrap(), vec![Keep, Keep, Delete]);
        assert_eq!(convert_to_edit_tags(&chars("ab"), &chars("ba")), Err(Unconvertible));
        assert_eq!(convert_to_edit_tags(&chars("ab"), &chars("abc")), Err(Unconvertible));
    }

    #[test]
    fn apply_cases() {
        let s = chars("abc");
        assert_eq!(apply_edit_tags(&s, &[Keep; 3]).unwrap().tokens, s);
        let all_deleted = apply_edit_tags(&s, &[Delete; 3]).unwrap();
        assert!(all_deleted.fell_back);
        assert_eq!(all_deleted.tokens, s);
        assert!(apply_edit_tags(&s, &[Keep]).is_err());
    }

    fn is_subsequence(t: &[char], s: &[char]) -> bool {
        let mut it = s.iter();
        t.iter().all(|c| it.any(|x| x == c))
    }

    proptest! {
        #[test]
        fn conversion_succeeds_iff_subsequence(s in "[abc]{1,8}", t in "[abc]{0,6}") {
            let (s, t) = (chars(&s), chars(&t));
            prop_assert_eq!(convert_to_edit_tags(&s, &t).is_ok(), is_subsequence(&t, &s));
        }

        #[test]
        fn applied_length_bounded(s in "[abc]{1,10}", mask in proptest::collection::vec(any::<bool>(), 10)) {
            let s = chars(&s);
            let tags: Vec<EditTag> = mask[..s.len()].iter().map(|&k| if k { Keep } else { Delete }).collect();
            let out = apply_edit_tags(&s, &tags).unwrap();
            prop_assert!(out.tokens.len() <= s.len());
            let any_delete = tags.contains(&Delete);
            prop_assert_eq!(out.tokens.len() == s.len(), !any_delete || out.fell_back);
        }
    }
}
