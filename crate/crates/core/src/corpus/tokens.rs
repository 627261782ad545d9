use super::{OutlineAnnotation, VideoDocument};
use crate::tags::BioTag;
use crate::{Error, Result};

/// Token inserted between consecutive subtitles.
pub const SEPARATOR: char = ',';

pub const DEFAULT_MAX_LEN: usize = 512;

/// Character tokens of a document with per-token visual triple
/// `(top, left, size)`, timestamp and source box.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<char>,
    pub visual: Vec<[f64; 3]>,
    pub timestamp_of: Vec<f64>,
    /// `None` for inserted separators.
    pub box_index_of: Vec<Option<usize>>,
    pub truncated: bool,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_separator(&self, k: usize) -> bool {
        self.box_index_of[k].is_none()
    }

    pub fn text(&self, start: usize, end: usize) -> String {
        self.tokens[start..=end].iter().collect()
    }

    /// Builds tokens and fills visual features in one go.
    pub fn from_document(doc: &VideoDocument, max_len: usize) -> TokenSequence {
        let mut seq = build_token_sequence(doc, max_len);
        compute_visual_features(doc, &mut seq);
        seq
    }

    /// A text-only sequence (no boxes, zero visual features).
    pub fn from_text(text: &str) -> TokenSequence {
        let tokens: Vec<char> = text.chars().collect();
        let n = tokens.len();
        TokenSequence {
            tokens,
            visual: vec![[0.0; 3]; n],
            timestamp_of: vec![0.0; n],
            box_index_of: vec![Some(0); n],
            truncated: false,
        }
    }

    /// Timestamp of the first non-separator token of `[start, end]`, falling
    /// back to the (inherited) timestamp of `start`.
    pub fn span_time(&self, start: usize, end: usize) -> f64 {
        (start..=end)
            .find(|&k| !self.is_separator(k))
            .map_or(self.timestamp_of[start], |k| self.timestamp_of[k])
    }

    /// Positions that carry the per-subtitle tag: token 0 and every separator.
    pub fn sentence_slots(&self) -> Vec<usize> {
        if self.is_empty() {
            return Vec::new();
        }
        std::iter::once(0)
            .chain((1..self.len()).filter(|&k| self.is_separator(k)))
            .collect()
    }
}

/// Joins box texts with a single separator token, truncating to `max_len`.
/// Visual features are left at zero.
pub fn build_token_sequence(doc: &VideoDocument, max_len: usize) -> TokenSequence {
    let mut seq = TokenSequence {
        tokens: Vec::new(),
        visual: Vec::new(),
        timestamp_of: Vec::new(),
        box_index_of: Vec::new(),
        truncated: false,
    };
    for (i, b) in doc.boxes.iter().enumerate() {
        if i > 0 {
            let prev_t = doc.boxes[i - 1].timestamp;
            seq.tokens.push(SEPARATOR);
            seq.timestamp_of.push(prev_t);
            seq.box_index_of.push(None);
        }
        for c in b.text.chars() {
            seq.tokens.push(c);
            seq.timestamp_of.push(b.timestamp);
            seq.box_index_of.push(Some(i));
        }
    }
    if seq.tokens.len() > max_len {
        seq.tokens.truncate(max_len);
        seq.timestamp_of.truncate(max_len);
        seq.box_index_of.truncate(max_len);
        seq.truncated = true;
    }
    seq.visual = vec![[0.0; 3]; seq.tokens.len()];
    seq
}

/// Relative top margin, relative left margin and per-character area
/// fraction of each token's box; separators get zeros.
pub fn compute_visual_features(doc: &VideoDocument, seq: &mut TokenSequence) {
    let frame_area = doc.frame_height * doc.frame_width;
    for (k, slot) in seq.box_index_of.iter().enumerate() {
        seq.visual[k] = match slot {
            None => [0.0; 3],
            Some(i) => {
                let b = &doc.boxes[*i];
                let chars = b.char_len() as f64;
                [
                    b.top_margin / doc.frame_height,
                    b.left_margin / doc.frame_width,
                    (b.height * b.width) / (frame_area * chars),
                ]
            }
        };
    }
}

/// Gold BIO tags: B at each span start, I inside, O elsewhere.
pub fn spans_to_tags(seq_len: usize, annotations: &[OutlineAnnotation]) -> Result<Vec<BioTag>> {
    let spans: Vec<(usize, usize)> = annotations.iter().map(|a| (a.span_start, a.span_end)).collect();
    span_pairs_to_tags(seq_len, &spans)
}

pub(crate) fn span_pairs_to_tags(seq_len: usize, spans: &[(usize, usize)]) -> Result<Vec<BioTag>> {
    let mut tags = vec![BioTag::O; seq_len];
    for &(start, end) in spans {
        if start > end || end >= seq_len {
            return Err(Error::SpanOutOfBounds { start, end, len: seq_len });
        }
        if tags[start..=end].iter().any(|&t| t != BioTag::O) {
            return Err(Error::OverlappingSpans { start, end });
        }
        tags[start] = BioTag::B;
        for t in &mut tags[start + 1..=end] {
            *t = BioTag::I;
        }
    }
    Ok(tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SubtitleBox;
    use crate::tags::BioTag::*;

    fn doc(boxes: &[(&str, f64)]) -> VideoDocument {
        VideoDocument {
            video_id: "v".into(),
            frame_height: 720.0,
            frame_width: 1280.0,
            boxes: boxes
                .iter()
                .map(|&(text, t)| SubtitleBox {
                    text: text.into(),
                    timestamp: t,
                    top_margin: 72.0,
                    left_margin: 128.0,
                    height: 72.0,
                    width: 640.0,
                })
                .collect(),
        }
    }

    fn ann(start: usize, end: usize) -> OutlineAnnotation {
        OutlineAnnotation {
            video_id: "v".into(),
            segmentation_time: 0.0,
            span_start: start,
            span_end: end,
            rewritten: String::new(),
        }
    }

    #[test]
    fn comma_joined_tokens_and_timestamps() {
        let seq = build_token_sequence(&doc(&[("ab", 1.0), ("cd", 2.0)]), DEFAULT_MAX_LEN);
        assert_eq!(seq.tokens, vec!['a', 'b', ',', 'c', 'd']);
        assert_eq!(seq.timestamp_of, vec![1.0, 1.0, 1.0, 2.0, 2.0]);
        assert_eq!(seq.box_index_of, vec![Some(0), Some(0), None, Some(1), Some(1)]);
        assert!(!seq.truncated);
    }

    #[test]
    fn single_box_has_no_separator() {
        let seq = build_token_sequence(&doc(&[("xyz", 5.0)]), DEFAULT_MAX_LEN);
        assert_eq!(seq.tokens, vec!['x', 'y', 'z']);
    }

    #[test]
    fn truncation_keeps_prefix_and_flags() {
        let seq = build_token_sequence(&doc(&[("ab", 1.0), ("cd", 2.0)]), 3);
        assert_eq!(seq.tokens, vec!['a', 'b', ',']);
        assert!(seq.truncated);
        assert_eq!(seq.visual.len(), 3);
    }

    #[test]
    fn visual_features_hand_computed() {
        let d = doc(&[("0123456789", 1.0), ("x", 2.0)]);
        let seq = TokenSequence::from_document(&d, DEFAULT_MAX_LEN);
        for k in 0..10 {
            let v = seq.visual[k];
            assert!((v[0] - 0.1).abs() < 1e-12);
            assert!((v[1] - 0.1).abs() < 1e-12);
            assert!((v[2] - 0.005).abs() < 1e-12);
        }
        assert_eq!(seq.visual[10], [0.0; 3]);
    }

    #[test]
    fn visual_flush_and_full_frame() {
        let mut d = doc(&[("x", 1.0)]);
        d.boxes[0].top_margin = 0.0;
        d.boxes[0].left_margin = 0.0;
        d.boxes[0].height = 720.0;
        d.boxes[0].width = 1280.0;
        let seq = TokenSequence::from_document(&d, DEFAULT_MAX_LEN);
        assert_eq!(seq.visual[0], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn tags_from_spans() {
        assert_eq!(spans_to_tags(6, &[ann(2, 4)]).unwrap(), vec![O, O, B, I, I, O]);
        assert_eq!(spans_to_tags(3, &[]).unwrap(), vec![O, O, O]);
        assert_eq!(spans_to_tags(4, &[ann(0, 0), ann(2, 3)]).unwrap(), vec![B, O, B, I]);
    }

    #[test]
    fn tag_errors() {
        assert!(matches!(
            spans_to_tags(4, &[ann(0, 2), ann(2, 3)]),
            Err(Error::OverlappingSpans { .. })
        ));
        assert!(matches!(spans_to_tags(4, &[ann(2, 4)]), Err(Error::SpanOutOfBounds { .. })));
    }

    #[test]
    fn span_time_skips_leading_separator() {
        let seq = build_token_sequence(&doc(&[("ab", 1.0), ("cd", 2.0)]), DEFAULT_MAX_LEN);
        assert_eq!(seq.span_time(2, 4), 2.0);
        assert_eq!(seq.span_time(2, 2), 1.0);
        assert_eq!(seq.sentence_slots(), vec![0, 2]);
    }
}
