//! Subtitle documents, token sequences with visual features, gold tags,
//! pretraining examples and the synthetic corpus generator.

mod articles;
pub mod records;
pub mod synth;
mod tokens;

pub use articles::{build_heading_pretrain_example, ArticleBlock, ArticleRecord, MIN_HEADINGS};
pub use records::{
    parse_video, parse_videos, read_annotations, read_articles, write_annotations, write_articles,
    write_subtitles,
};
pub use synth::{generate_synthetic_articles, generate_synthetic_corpus, SynthConfig, SyntheticVideo};
pub use tokens::{
    build_token_sequence, compute_visual_features, spans_to_tags, TokenSequence, DEFAULT_MAX_LEN,
    SEPARATOR,
};
pub(crate) use tokens::span_pairs_to_tags;

use serde::{Deserialize, Serialize};

/// One OCR-recognized subtitle box. Geometry is in pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtitleBox {
    pub text: String,
    pub timestamp: f64,
    pub top_margin: f64,
    pub left_margin: f64,
    pub height: f64,
    pub width: f64,
}

impl SubtitleBox {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoDocument {
    pub video_id: String,
    pub frame_height: f64,
    pub frame_width: f64,
    pub boxes: Vec<SubtitleBox>,
}

impl VideoDocument {
    /// Checks frame and box geometry, text and timestamp order.
    pub fn validate(&self) -> crate::Result<()> {
        let geometry = |message: String| crate::Error::Geometry {
            video_id: self.video_id.clone(),
            message,
        };
        if self.boxes.is_empty() {
            return Err(crate::Error::EmptyDocument(self.video_id.clone()));
        }
        if !(self.frame_height > 0.0 && self.frame_width > 0.0) {
            return Err(geometry(format!(
                "frame {}x{} must be positive",
                self.frame_height, self.frame_width
            )));
        }
        let mut prev_t = f64::NEG_INFINITY;
        for (i, b) in self.boxes.iter().enumerate() {
            if b.text.trim().is_empty() {
                return Err(geometry(format!("box {i} has empty text")));
            }
            if !(b.timestamp.is_finite() && b.timestamp >= 0.0) {
                return Err(geometry(format!("box {i} has invalid timestamp {}", b.timestamp)));
            }
            if b.timestamp < prev_t {
                return Err(geometry(format!("box {i} timestamp is out of order")));
            }
            prev_t = b.timestamp;
            if !(b.height > 0.0 && b.width > 0.0) {
                return Err(geometry(format!("box {i} has non-positive size")));
            }
            if !(b.top_margin >= 0.0 && b.left_margin >= 0.0) {
                return Err(geometry(format!("box {i} has a negative margin")));
            }
            if b.top_margin + b.height > self.frame_height {
                return Err(geometry(format!(
                    "box {i}: top margin {} + height {} exceeds frame height {}",
                    b.top_margin, b.height, self.frame_height
                )));
            }
            if b.left_margin + b.width > self.frame_width {
                return Err(geometry(format!(
                    "box {i}: left margin {} + width {} exceeds frame width {}",
                    b.left_margin, b.width, self.frame_width
                )));
            }
        }
        Ok(())
    }

    /// The discrete set of timestamps a segmentation point may take.
    pub fn timestamps(&self) -> Vec<f64> {
        self.boxes.iter().map(|b| b.timestamp).collect()
    }
}

/// Collapses runs of consecutive boxes with identical text to the earliest box.
pub fn dedup_subtitles(doc: &VideoDocument) -> VideoDocument {
    let mut boxes: Vec<SubtitleBox> = Vec::with_capacity(doc.boxes.len());
    for b in &doc.boxes {
        match boxes.last() {
            Some(last) if last.text == b.text => {}
            _ => boxes.push(b.clone()),
        }
    }
    VideoDocument {
        video_id: doc.video_id.clone(),
        frame_height: doc.frame_height,
        frame_width: doc.frame_width,
        boxes,
    }
}

/// A gold outline: where the segment starts, which tokens reference the
/// heading and the final rewritten heading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlineAnnotation {
    pub video_id: String,
    pub segmentation_time: f64,
    pub span_start: usize,
    pub span_end: usize,
    pub rewritten: String,
}
