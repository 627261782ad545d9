//! KEEP/DELETE rewriting of extracted spans into headings.

mod edits;

pub use edits::{apply_edit_tags, convert_to_edit_tags, Applied, Unconvertible};

use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::crf::Constraints;
use crate::encoder::{EncoderConfig, FusionKind, GateActivation};
use crate::model::{Example, Tagger, TaggerConfig};
use crate::tags::{from_indices, to_indices, EditTag};
use crate::vocab::Vocab;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EditExample {
    pub source: Vec<char>,
    pub target: Vec<char>,
    pub tags: Vec<EditTag>,
}

/// Convertible pairs plus how many were excluded.
#[derive(Clone, Debug, Default)]
pub struct EditSet {
    pub examples: Vec<EditExample>,
    pub excluded: usize,
}

impl EditSet {
    pub fn exclusion_rate(&self) -> f64 {
        let total = self.examples.len() + self.excluded;
        if total == 0 {
            0.0
        } else {
            self.excluded as f64 / total as f64
        }
    }
}

/// Builds supervision from (span text, gold heading) pairs, dropping pairs
/// whose heading is not a subsequence of the span or whose span is empty.
pub fn build_edit_examples<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> EditSet {
    let mut set = EditSet::default();
    for (source, target) in pairs {
        let source: Vec<char> = source.chars().collect();
        let target: Vec<char> = target.chars().collect();
        if source.is_empty() {
            set.excluded += 1;
            continue;
        }
        match convert_to_edit_tags(&source, &target) {
            Ok(tags) => set.examples.push(EditExample { source, target, tags }),
            Err(Unconvertible) => set.excluded += 1,
        }
    }
    if set.excluded > 0 {
        log::info!(
            "{} of {} rewrite pairs unconvertible and excluded",
            set.excluded,
            set.excluded + set.examples.len()
        );
    }
    set
}

/// Which rewriting stage runs after extraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewriteMode {
    /// Extracted spans are used as headings directly.
    Off,
    /// Two-label CRF over the encoder.
    Bc,
    /// Feed-forward per-token KEEP/DELETE head.
    LtLike,
}

impl FromStr for RewriteMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(RewriteMode::Off),
            "bc" => Ok(RewriteMode::Bc),
            "lt-like" => Ok(RewriteMode::LtLike),
            other => Err(Error::Config(format!("unknown rewrite mode `{other}` (expected off, bc or lt-like)"))),
        }
    }
}

impl std::fmt::Display for RewriteMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RewriteMode::Off => "off",
            RewriteMode::Bc => "bc",
            RewriteMode::LtLike => "lt-like",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Rewriter {
    pub mode: RewriteMode,
    pub tagger: Tagger,
    pub vocab: Vocab,
    pub max_len: usize,
}

impl Rewriter {
    pub fn tagger_config(mode: RewriteMode, encoder: EncoderConfig) -> Result<TaggerConfig> {
        if mode == RewriteMode::Off {
            return Err(Error::Config("rewrite mode `off` has no model".into()));
        }
        Ok(TaggerConfig {
            encoder,
            labels: 2,
            fusion: FusionKind::None,
            gate_activation: GateActivation::Relu,
            crf: mode == RewriteMode::Bc,
        })
    }

    pub fn new(mode: RewriteMode, vocab: Vocab, encoder: EncoderConfig, seed: u64) -> Result<Self> {
        if encoder.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "encoder vocab size {} != vocabulary size {}",
                encoder.vocab_size,
                vocab.len()
            )));
        }
        let max_len = encoder.max_positions;
        let tagger = Tagger::new(Self::tagger_config(mode, encoder)?, seed)?;
        Ok(Rewriter {
            mode,
            tagger,
            vocab,
            max_len,
        })
    }

    /// Training example; sources longer than the model are cut.
    pub fn example(&self, edit: &EditExample) -> Example {
        let n = edit.source.len().min(self.max_len);
        Example {
            tokens: self.vocab.encode(&edit.source[..n]),
            visual: Array2::zeros((n, 3)),
            gold: to_indices(&edit.tags[..n]),
            slots: None,
        }
    }

    pub fn predict_tags(&self, source: &[char]) -> Result<Vec<EditTag>> {
        if source.is_empty() {
            return Ok(Vec::new());
        }
        let tokens = self.vocab.encode(source);
        let visual = Array2::zeros((source.len(), 3));
        let labels = self.tagger.predict(&tokens, &visual, None, Constraints::None)?;
        Ok(from_indices(&labels))
    }

    /// Predicts and applies edit tags. Characters beyond the model length
    /// are kept as they are.
    pub fn rewrite(&self, span: &str) -> Result<String> {
        let source: Vec<char> = span.chars().collect();
        if source.is_empty() {
            return Ok(String::new());
        }
        let n = source.len().min(self.max_len);
        if n < source.len() {
            log::warn!("span of {} characters truncated to {} for rewriting", source.len(), n);
        }
        let mut tags = self.predict_tags(&source[..n])?;
        tags.resize(source.len(), EditTag::Keep);
        Ok(apply_edit_tags(&source, &tags)?.tokens.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exclusions_counted() {
        let set = build_edit_examples([("abc", "ac"), ("abc", "ca"), ("", ""), ("xy", "xy")]);
        assert_eq!(set.examples.len(), 2);
        assert_eq!(set.excluded, 2);
        assert!((set.exclusion_rate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn modes_parse() {
        for mode in [RewriteMode::Off, RewriteMode::Bc, RewriteMode::LtLike] {
            assert_eq!(mode.to_string().parse::<RewriteMode>().unwrap(), mode);
        }
        assert!("lt".parse::<RewriteMode>().is_err());
    }

    #[test]
    fn over_length_tail_kept() {
        let vocab = Vocab::build("abcdef".chars());
        let mut encoder = EncoderConfig::desk(vocab.len());
        encoder.model_dim = 8;
        encoder.heads = 2;
        encoder.ff_dim = 8;
        encoder.layers = 1;
        encoder.max_positions = 4;
        let r = Rewriter::new(RewriteMode::LtLike, vocab, encoder, 1).unwrap();
        let out = r.rewrite("abcdef").unwrap();
        assert!(out.ends_with("ef"));
        assert!(!out.is_empty());
    }
}
