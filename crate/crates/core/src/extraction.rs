//! Model variants, span extraction and back-tracing spans to segmentation
//! points.

use std::collections::BTreeMap;
use std::io::BufRead;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{dedup_subtitles, OutlineAnnotation, TokenSequence, VideoDocument};
use crate::crf::Constraints;
use crate::encoder::{EncoderConfig, FusionKind, GateActivation};
use crate::model::{Example, Tagger, TaggerConfig};
use crate::rewriter::{convert_to_edit_tags, Rewriter};
use crate::tags::{from_indices, to_indices, BioTag, EditTag};
use crate::vocab::Vocab;
use crate::{Error, Result};

/// How the extractor reads its tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One BIO tag per character, contiguous spans.
    Token,
    /// One tag per character; B/I may skip O characters inside a span.
    Joint,
    /// One tag per subtitle, read at position 0 and at each separator.
    Sentence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub name: String,
    pub uses_crf: bool,
    pub uses_visual: bool,
    pub uses_pretraining: bool,
    pub fusion: FusionKind,
    pub granularity: Granularity,
}

impl ModelVariant {
    fn new(name: &str, crf: bool, visual: bool, pretraining: bool, granularity: Granularity) -> Self {
        ModelVariant {
            name: name.into(),
            uses_crf: crf,
            uses_visual: visual,
            uses_pretraining: pretraining,
            fusion: if visual { FusionKind::Gate } else { FusionKind::None },
            granularity,
        }
    }

    /// Token classification with non-contiguous tags; no rewriting stage.
    pub fn joint_bc() -> Self {
        Self::new("JointBC", false, false, false, Granularity::Joint)
    }

    pub fn bc_base() -> Self {
        Self::new("BC-base", true, false, false, Granularity::Token)
    }

    pub fn bc_pt() -> Self {
        Self::new("BC-PT", true, false, true, Granularity::Token)
    }

    pub fn vse_bert() -> Self {
        Self::new("VSEBert", false, true, true, Granularity::Token)
    }

    pub fn vsenet() -> Self {
        Self::new("VSENet", true, true, true, Granularity::Token)
    }

    pub fn sent_bc() -> Self {
        Self::new("Sent-BC", true, false, false, Granularity::Sentence)
    }

    /// The six named configurations.
    pub fn all() -> Vec<Self> {
        vec![
            Self::joint_bc(),
            Self::bc_base(),
            Self::bc_pt(),
            Self::vse_bert(),
            Self::vsenet(),
            Self::sent_bc(),
        ]
    }

    /// Ablation: same model trained from random initialization.
    pub fn without_pretraining(mut self) -> Self {
        self.uses_pretraining = false;
        self.name.push_str("-wo-PT");
        self
    }

    /// Ablation: visual features dropped.
    pub fn without_visual(mut self) -> Self {
        self.uses_visual = false;
        self.fusion = FusionKind::None;
        self.name.push_str("-wo-VSE");
        self
    }

    /// Ablation: per-token argmax instead of a CRF.
    pub fn without_crf(mut self) -> Self {
        self.uses_crf = false;
        self.name.push_str("-wo-CRF");
        self
    }

    /// Ablation: concatenation fusion instead of the gate.
    pub fn with_concat(mut self) -> Self {
        if self.uses_visual {
            self.fusion = FusionKind::Concat;
            self.name.push_str("-cat");
        }
        self
    }

    /// Accepts a named configuration optionally followed by ablation
    /// suffixes, e.g. `VSENet-wo-PT` or `VSENet-cat`.
    pub fn from_name(name: &str) -> Result<Self> {
        let base = Self::all()
            .into_iter()
            .filter(|v| name.starts_with(&v.name))
            .max_by_key(|v| v.name.len())
            .ok_or_else(|| Error::Variant(format!("unknown variant `{name}`")))?;
        let mut variant = base.clone();
        let mut rest = &name[base.name.len()..];
        while !rest.is_empty() {
            let (next, tail) = if let Some(t) = rest.strip_prefix("-wo-PT") {
                (variant.without_pretraining(), t)
            } else if let Some(t) = rest.strip_prefix("-wo-VSE") {
                (variant.without_visual(), t)
            } else if let Some(t) = rest.strip_prefix("-wo-CRF") {
                (variant.without_crf(), t)
            } else if let Some(t) = rest.strip_prefix("-cat") {
                (variant.with_concat(), t)
            } else {
                return Err(Error::Variant(format!("unknown variant suffix `{rest}` in `{name}`")));
            };
            variant = next;
            rest = tail;
        }
        variant.name = name.to_string();
        Ok(variant)
    }

    pub fn tagger_config(&self, encoder: EncoderConfig, gate_activation: GateActivation) -> TaggerConfig {
        TaggerConfig {
            encoder,
            labels: 3,
            fusion: if self.uses_visual { self.fusion } else { FusionKind::None },
            gate_activation,
            crf: self.uses_crf,
        }
    }

    fn constraints(&self) -> Constraints {
        if self.uses_crf {
            Constraints::Bio
        } else {
            Constraints::None
        }
    }
}

/// A predicted heading span with its segmentation point.
#[derive(Clone, Debug, PartialEq)]
pub struct OutlineSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub segmentation_time: f64,
}

/// Maximal B-I* runs; an I with nothing open starts a new span.
pub fn decode_bio(tags: &[BioTag]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (k, &tag) in tags.iter().enumerate() {
        match tag {
            BioTag::B => {
                if let Some(s) = open.take() {
                    spans.push((s, k - 1));
                }
                open = Some(k);
            }
            BioTag::I => {
                if open.is_none() {
                    open = Some(k);
                }
            }
            BioTag::O => {
                if let Some(s) = open.take() {
                    spans.push((s, k - 1));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push((s, tags.len() - 1));
    }
    spans
}

/// Groups non-contiguous B/I tags: each group runs from a B (or a leading
/// orphan I) to the last I before the next B. Returns the tagged positions
/// of every group.
pub fn group_joint(tags: &[BioTag]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (k, &tag) in tags.iter().enumerate() {
        match tag {
            BioTag::B => groups.push(vec![k]),
            BioTag::I => match groups.last_mut() {
                Some(g) => g.push(k),
                None => groups.push(vec![k]),
            },
            BioTag::O => {}
        }
    }
    groups
}

fn span_from(seq: &TokenSequence, start: usize, end: usize) -> OutlineSpan {
    OutlineSpan {
        start,
        end,
        text: seq.text(start, end),
        segmentation_time: seq.span_time(start, end),
    }
}

/// Contiguous spans from per-token BIO tags.
pub fn spans_from_tags(seq: &TokenSequence, tags: &[BioTag]) -> Vec<OutlineSpan> {
    decode_bio(tags)
        .into_iter()
        .map(|(s, e)| span_from(seq, s, e))
        .collect()
}

/// Spans from non-contiguous tags; O characters inside a span are dropped
/// from its text. The segmentation point is the first tagged character's.
pub fn joint_spans(seq: &TokenSequence, tags: &[BioTag]) -> Vec<OutlineSpan> {
    group_joint(tags)
        .into_iter()
        .map(|positions| {
            let start = positions[0];
            let end = *positions.last().expect("groups are non-empty");
            let text = positions.iter().map(|&k| seq.tokens[k]).collect();
            let first_content = positions.iter().copied().find(|&k| !seq.is_separator(k)).unwrap_or(start);
            OutlineSpan {
                start,
                end,
                text,
                segmentation_time: seq.timestamp_of[first_content],
            }
        })
        .collect()
}

/// Token ranges `[first, last]` of each subtitle present in the sequence,
/// indexed like [`TokenSequence::sentence_slots`].
fn sentence_ranges(seq: &TokenSequence) -> Vec<Option<(usize, usize)>> {
    let slots = seq.sentence_slots();
    slots
        .iter()
        .enumerate()
        .map(|(i, &slot)| {
            let first = if i == 0 { 0 } else { slot + 1 };
            let stop = slots.get(i + 1).copied().unwrap_or(seq.len());
            (first < stop).then(|| (first, stop - 1))
        })
        .collect()
}

/// Whole-subtitle spans from one tag per subtitle.
pub fn sentence_spans(seq: &TokenSequence, sentence_tags: &[BioTag]) -> Vec<OutlineSpan> {
    let ranges = sentence_ranges(seq);
    decode_bio(sentence_tags)
        .into_iter()
        .filter_map(|(a, b)| {
            let first = ranges[a..=b].iter().flatten().next()?.0;
            let last = ranges[a..=b].iter().flatten().last()?.1;
            Some(span_from(seq, first, last))
        })
        .collect()
}

/// Keeps the first span per segmentation point: one outline per time point.
pub fn dedup_by_time(spans: Vec<OutlineSpan>) -> Vec<OutlineSpan> {
    let mut seen: Vec<f64> = Vec::new();
    spans
        .into_iter()
        .filter(|s| {
            if seen.contains(&s.segmentation_time) {
                false
            } else {
                seen.push(s.segmentation_time);
                true
            }
        })
        .collect()
}

/// Gold annotations restricted to the (possibly truncated) sequence; spans
/// crossing the cut are clipped.
fn visible_spans(seq: &TokenSequence, annotations: &[OutlineAnnotation]) -> Vec<(usize, usize, String)> {
    annotations
        .iter()
        .filter(|a| a.span_start < seq.len())
        .map(|a| (a.span_start, a.span_end.min(seq.len() - 1), a.rewritten.clone()))
        .collect()
}

/// A trained span extractor together with its vocabulary.
#[derive(Clone, Debug)]
pub struct Extractor {
    pub variant: ModelVariant,
    pub tagger: Tagger,
    pub vocab: Vocab,
    pub max_len: usize,
}

impl Extractor {
    pub fn new(variant: ModelVariant, vocab: Vocab, encoder: EncoderConfig, seed: u64) -> Result<Self> {
        let max_len = encoder.max_positions;
        let config = variant.tagger_config(encoder, GateActivation::Relu);
        if config.encoder.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "encoder vocab size {} != vocabulary size {}",
                config.encoder.vocab_size,
                vocab.len()
            )));
        }
        Ok(Extractor {
            variant,
            tagger: Tagger::new(config, seed)?,
            vocab,
            max_len,
        })
    }

    pub fn sequence(&self, doc: &VideoDocument) -> TokenSequence {
        TokenSequence::from_document(&dedup_subtitles(doc), self.max_len)
    }

    fn visual(&self, seq: &TokenSequence) -> Array2<f64> {
        let mut m = Array2::zeros((seq.len(), 3));
        if self.variant.uses_visual {
            for (k, v) in seq.visual.iter().enumerate() {
                m.row_mut(k).assign(&ndarray::arr1(v));
            }
        }
        m
    }

    /// Supervision for one document in the form this variant trains on.
    pub fn example(&self, seq: &TokenSequence, annotations: &[OutlineAnnotation]) -> Result<Example> {
        let tokens = self.vocab.encode(&seq.tokens);
        let visual = self.visual(seq);
        let spans = visible_spans(seq, annotations);
        let (gold, slots) = match self.variant.granularity {
            Granularity::Token => {
                let pairs: Vec<(usize, usize)> = spans.iter().map(|s| (s.0, s.1)).collect();
                (to_indices(&crate::corpus::span_pairs_to_tags(seq.len(), &pairs)?), None)
            }
            Granularity::Joint => (to_indices(&joint_gold(seq, &spans)?), None),
            Granularity::Sentence => {
                let slots = seq.sentence_slots();
                (to_indices(&sentence_gold(seq, &spans)), Some(slots))
            }
        };
        Ok(Example {
            tokens,
            visual,
            gold,
            slots,
        })
    }

    /// Raw predicted tags: per token, or per subtitle for sentence variants.
    pub fn predict_tags(&self, seq: &TokenSequence) -> Result<Vec<BioTag>> {
        if seq.is_empty() {
            return Ok(Vec::new());
        }
        let tokens = self.vocab.encode(&seq.tokens);
        let visual = self.visual(seq);
        let slots = (self.variant.granularity == Granularity::Sentence).then(|| seq.sentence_slots());
        let labels = self
            .tagger
            .predict(&tokens, &visual, slots.as_deref(), self.variant.constraints())?;
        Ok(from_indices(&labels))
    }

    /// Spans sorted by start, before per-time deduplication.
    pub fn extract(&self, seq: &TokenSequence) -> Result<Vec<OutlineSpan>> {
        let tags = self.predict_tags(seq)?;
        Ok(match self.variant.granularity {
            Granularity::Token => spans_from_tags(seq, &tags),
            Granularity::Joint => joint_spans(seq, &tags),
            Granularity::Sentence => sentence_spans(seq, &tags),
        })
    }

    /// Full document pipeline: dedup, tokenize, extract, one outline per
    /// time point, optional rewriting.
    pub fn predict_document(&self, doc: &VideoDocument, rewriter: Option<&Rewriter>) -> Result<Vec<PredictionRecord>> {
        let seq = self.sequence(doc);
        let spans = dedup_by_time(self.extract(&seq)?);
        spans
            .into_iter()
            .map(|s| {
                let heading = match rewriter {
                    Some(r) if self.variant.granularity != Granularity::Joint => r.rewrite(&s.text)?,
                    _ => s.text.clone(),
                };
                Ok(PredictionRecord {
                    video_id: doc.video_id.clone(),
                    t: s.segmentation_time,
                    span_start: s.start,
                    span_end: s.end,
                    span_text: s.text,
                    heading,
                })
            })
            .collect()
    }

    pub fn predict_corpus(&self, documents: &[VideoDocument], rewriter: Option<&Rewriter>) -> Result<Vec<PredictionRecord>> {
        let mut out = Vec::new();
        for doc in documents {
            out.extend(self.predict_document(doc, rewriter)?);
        }
        Ok(out)
    }
}

fn joint_gold(seq: &TokenSequence, spans: &[(usize, usize, String)]) -> Result<Vec<BioTag>> {
    let pairs: Vec<(usize, usize)> = spans.iter().map(|s| (s.0, s.1)).collect();
    let mut tags = crate::corpus::span_pairs_to_tags(seq.len(), &pairs)?;
    for (start, end, rewritten) in spans {
        let source: Vec<char> = seq.tokens[*start..=*end].to_vec();
        let target: Vec<char> = rewritten.chars().collect();
        if let Ok(edits) = convert_to_edit_tags(&source, &target) {
            let mut first = true;
            for (k, e) in (*start..=*end).zip(edits) {
                tags[k] = match (e, first) {
                    (EditTag::Delete, _) => BioTag::O,
                    (EditTag::Keep, true) => {
                        first = false;
                        BioTag::B
                    }
                    (EditTag::Keep, false) => BioTag::I,
                };
            }
        }
    }
    Ok(tags)
}

fn sentence_gold(seq: &TokenSequence, spans: &[(usize, usize, String)]) -> Vec<BioTag> {
    let ranges = sentence_ranges(seq);
    let mut tags = vec![BioTag::O; ranges.len()];
    let sentence_of = |k: usize| -> Option<usize> {
        ranges.iter().position(|r| r.is_some_and(|(a, b)| a <= k && k <= b))
    };
    for (start, end, _) in spans {
        let first = (*start..=*end).find_map(sentence_of);
        let last = (*start..=*end).rev().find_map(sentence_of);
        if let (Some(a), Some(b)) = (first, last) {
            tags[a] = BioTag::B;
            for t in &mut tags[a + 1..=b] {
                *t = BioTag::I;
            }
        }
    }
    tags
}

/// One predicted outline as written by `predict`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub t: f64,
    pub span_start: usize,
    pub span_end: usize,
    pub span_text: String,
    pub heading: String,
}

#[derive(Deserialize)]
struct PredictionLine {
    video_id: String,
    t: f64,
    span_start: usize,
    span_end: usize,
    span_text: String,
    heading: String,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

pub fn write_predictions(records: &[PredictionRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serialization cannot fail") + "\n")
        .collect()
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let parse = |message: String| Error::Parse { line: i + 1, message };
        let line = line.map_err(|e| parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PredictionLine = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        for key in r.extra.keys() {
            log::warn!("line {}: ignoring unknown field `{key}`", i + 1);
        }
        out.push(PredictionRecord {
            video_id: r.video_id,
            t: r.t,
            span_start: r.span_start,
            span_end: r.span_end,
            span_text: r.span_text,
            heading: r.heading,
        });
    }
    Ok(out)
}
