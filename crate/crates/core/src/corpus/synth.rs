//! Deterministic synthetic videos and articles.
//!
//! Each video is a run of segments; a segment opens with a heading box
//! followed by body boxes. Heading boxes are scaled by `highlight_strength`
//! (font size) and, when that exceeds 1, moved to the upper band of the
//! frame. With `text_signal` on, heading and body text come from disjoint
//! character pools; with it off both draw from the same pool, so only the
//! box geometry tells them apart.
//!
//! The character lexicon depends on `vocab_size` only, never on the seed,
//! so corpora and articles generated with different seeds share characters.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArticleBlock, ArticleRecord, OutlineAnnotation, SubtitleBox, VideoDocument};
use crate::{Error, Result};

const BASE_CHAR_PX: f64 = 36.0;
const LINE_HEIGHT: f64 = 1.2;
const FILLER_WORDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub videos: usize,
    pub segments_min: usize,
    pub segments_max: usize,
    pub body_boxes_min: usize,
    pub body_boxes_max: usize,
    pub box_chars_min: usize,
    pub box_chars_max: usize,
    pub vocab_size: usize,
    /// Font-size multiplier of heading boxes; 1.0 makes them look like body boxes.
    pub highlight_strength: f64,
    pub text_signal: bool,
    /// Probability that a box starts with a filler word. Fillers inside a
    /// heading box are part of the span but not of the rewritten heading.
    pub filler_rate: f64,
    /// Probability that a box is recognized twice in a row.
    pub duplicate_rate: f64,
    pub frame_height: f64,
    pub frame_width: f64,
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            videos: 100,
            segments_min: 3,
            segments_max: 5,
            body_boxes_min: 2,
            body_boxes_max: 4,
            box_chars_min: 4,
            box_chars_max: 8,
            vocab_size: 300,
            highlight_strength: 2.0,
            text_signal: true,
            filler_rate: 0.0,
            duplicate_rate: 0.1,
            frame_height: 720.0,
            frame_width: 1280.0,
            id_prefix: "syn".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.segments_min == 0 || self.segments_min > self.segments_max {
            return bad("segments range must satisfy 1 <= min <= max");
        }
        if self.body_boxes_min > self.body_boxes_max {
            return bad("body box range must satisfy min <= max");
        }
        if self.box_chars_min < 2 || self.box_chars_min > self.box_chars_max {
            return bad("box char range must satisfy 2 <= min <= max");
        }
        if self.vocab_size < 40 {
            return bad("vocab_size must be at least 40");
        }
        if !(1.0..=3.0).contains(&self.highlight_strength) {
            return bad("highlight_strength must lie in [1, 3]");
        }
        if !(0.0..=1.0).contains(&self.filler_rate) || !(0.0..=1.0).contains(&self.duplicate_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if !(self.frame_height >= 360.0 && self.frame_width >= 640.0) {
            return bad("frame must be at least 640x360");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub document: VideoDocument,
    pub annotations: Vec<OutlineAnnotation>,
}

struct Lexicon {
    fillers: Vec<String>,
    heading: Vec<char>,
    body: Vec<char>,
}

impl Lexicon {
    fn new(vocab_size: usize, text_signal: bool) -> Self {
        let chars: Vec<char> = (0..vocab_size as u32)
            .map(|i| char::from_u32(0x4E00 + i).expect("CJK block is contiguous"))
            .collect();
        let fillers = chars[..2 * FILLER_WORDS]
            .chunks(2)
            .map(|c| c.iter().collect())
            .collect();
        let rest = &chars[2 * FILLER_WORDS..];
        let split = rest.len() / 4;
        let (heading, body) = if text_signal {
            (rest[..split].to_vec(), rest[split..].to_vec())
        } else {
            (rest.to_vec(), rest.to_vec())
        };
        Lexicon {
            fillers,
            heading,
            body,
        }
    }
}

fn random_text(rng: &mut ChaCha8Rng, pool: &[char], min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| *pool.choose(rng).expect("pool is non-empty")).collect()
}

struct PlannedBox {
    text: String,
    heading: Option<String>,
}

fn place_box(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    text: &str,
    heading: bool,
    timestamp: f64,
) -> SubtitleBox {
    let chars = text.chars().count() as f64;
    let scale = if heading { config.highlight_strength } else { 1.0 };
    let mut char_px = BASE_CHAR_PX * scale * rng.random_range(0.9..1.1);
    let max_char_px = (config.frame_width - 20.0) / chars;
    char_px = char_px.min(max_char_px);
    let height = (char_px * LINE_HEIGHT).round();
    let width = (char_px * chars).round();
    let top_margin = if heading && config.highlight_strength > 1.0 {
        (config.frame_height * 0.08 + rng.random_range(0.0..40.0)).round()
    } else {
        (config.frame_height - 80.0 - height - rng.random_range(0.0..20.0)).round()
    };
    let slack = (config.frame_width - width).max(0.0);
    let left_margin = (slack / 2.0 + rng.random_range(-0.05..0.05) * slack).round().clamp(0.0, slack);
    SubtitleBox {
        text: text.to_string(),
        timestamp,
        top_margin,
        left_margin,
        height,
        width,
    }
}

fn generate_video(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    lexicon: &Lexicon,
    video_id: String,
) -> SyntheticVideo {
    let with_filler = |rng: &mut ChaCha8Rng, core: String| -> String {
        if rng.random_bool(config.filler_rate) {
            let filler = lexicon.fillers.choose(rng).expect("fillers exist");
            format!("{filler}{core}")
        } else {
            core
        }
    };

    let mut plan: Vec<PlannedBox> = Vec::new();
    let push_body = |rng: &mut ChaCha8Rng, plan: &mut Vec<PlannedBox>| loop {
        let core = random_text(rng, &lexicon.body, config.box_chars_min, config.box_chars_max);
        let text = with_filler(rng, core);
        if plan.last().is_none_or(|p| p.text != text) {
            plan.push(PlannedBox { text, heading: None });
            break;
        }
    };

    for _ in 0..rng.random_range(0..=1) {
        push_body(rng, &mut plan);
    }
    let segments = rng.random_range(config.segments_min..=config.segments_max);
    for _ in 0..segments {
        let core = random_text(rng, &lexicon.heading, config.box_chars_min, config.box_chars_max);
        let text = with_filler(rng, core.clone());
        plan.push(PlannedBox {
            text,
            heading: Some(core),
        });
        for _ in 0..rng.random_range(config.body_boxes_min..=config.body_boxes_max) {
            push_body(rng, &mut plan);
        }
    }

    let mut boxes = Vec::new();
    let mut annotations = Vec::new();
    let mut t = f64::from(rng.random_range(0..4u32)) * 0.5;
    let mut offset = 0usize;
    for (i, planned) in plan.iter().enumerate() {
        if i > 0 {
            offset += 1;
        }
        let placed = place_box(rng, config, &planned.text, planned.heading.is_some(), t);
        let len = planned.text.chars().count();
        if let Some(core) = &planned.heading {
            annotations.push(OutlineAnnotation {
                video_id: video_id.clone(),
                segmentation_time: t,
                span_start: offset,
                span_end: offset + len - 1,
                rewritten: core.clone(),
            });
        }
        offset += len;
        let duration = f64::from(rng.random_range(2..=8u32)) * 0.5;
        if rng.random_bool(config.duplicate_rate) {
            let mut dup = placed.clone();
            dup.timestamp = t + 0.5;
            boxes.push(placed);
            boxes.push(dup);
            t += duration + 0.5;
        } else {
            boxes.push(placed);
            t += duration;
        }
    }

    SyntheticVideo {
        document: VideoDocument {
            video_id,
            frame_height: config.frame_height,
            frame_width: config.frame_width,
            boxes,
        },
        annotations,
    }
}

/// Same `(config, seed)` always yields the same corpus.
pub fn generate_synthetic_corpus(config: &SynthConfig, seed: u64) -> Result<Vec<SyntheticVideo>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon = Lexicon::new(config.vocab_size, config.text_signal);
    Ok((0..config.videos)
        .map(|i| {
            let id = format!("{}-{seed}-{i:05}", config.id_prefix);
            generate_video(&mut rng, config, &lexicon, id)
        })
        .collect())
}

/// Articles over the same lexicon: 3 to 5 headings, each followed by one or
/// two body paragraphs.
pub fn generate_synthetic_articles(
    config: &SynthConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<ArticleRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA57C_1E00);
    let lexicon = Lexicon::new(config.vocab_size, config.text_signal);
    Ok((0..count)
        .map(|i| {
            let mut blocks = Vec::new();
            let headings = rng.random_range(3..=5);
            for _ in 0..headings {
                blocks.push(ArticleBlock {
                    text: random_text(&mut rng, &lexicon.heading, config.box_chars_min, config.box_chars_max),
                    is_heading: true,
                });
                for _ in 0..rng.random_range(1..=2) {
                    blocks.push(ArticleBlock {
                        text: random_text(&mut rng, &lexicon.body, 8, 16),
                        is_heading: false,
                    });
                }
            }
            ArticleRecord {
                article_id: format!("art-{seed}-{i:05}"),
                blocks,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{dedup_subtitles, records, TokenSequence, DEFAULT_MAX_LEN};

    fn small(videos: usize) -> SynthConfig {
        SynthConfig {
            videos,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = small(20);
        let a = generate_synthetic_corpus(&cfg, 7).unwrap();
        let b = generate_synthetic_corpus(&cfg, 7).unwrap();
        let docs = |c: &[SyntheticVideo]| c.iter().map(|v| v.document.clone()).collect::<Vec<_>>();
        assert_eq!(records::write_subtitles(&docs(&a)), records::write_subtitles(&docs(&b)));
        let c = generate_synthetic_corpus(&cfg, 8).unwrap();
        assert_ne!(records::write_subtitles(&docs(&a)), records::write_subtitles(&docs(&c)));
    }

    #[test]
    fn segment_counts_within_range() {
        let corpus = generate_synthetic_corpus(&small(100), 3).unwrap();
        for v in &corpus {
            let m = v.annotations.len();
            assert!((3..=5).contains(&m), "{m}");
        }
    }

    #[test]
    fn annotations_index_the_deduped_sequence() {
        let cfg = SynthConfig {
            filler_rate: 0.5,
            duplicate_rate: 0.5,
            ..small(30)
        };
        for v in generate_synthetic_corpus(&cfg, 11).unwrap() {
            v.document.validate().unwrap();
            let doc = dedup_subtitles(&v.document);
            let seq = TokenSequence::from_document(&doc, DEFAULT_MAX_LEN);
            for a in &v.annotations {
                let span = seq.text(a.span_start, a.span_end);
                assert!(span.ends_with(&a.rewritten), "{span} / {}", a.rewritten);
                assert_eq!(seq.span_time(a.span_start, a.span_end), a.segmentation_time);
                let b = seq.box_index_of[a.span_start].unwrap();
                assert_eq!(doc.boxes[b].text, span);
            }
        }
    }

    #[test]
    fn unit_highlight_gives_identical_size_distribution() {
        let cfg = SynthConfig {
            highlight_strength: 1.0,
            ..small(200)
        };
        let mut heading = Vec::new();
        let mut body = Vec::new();
        for v in generate_synthetic_corpus(&cfg, 5).unwrap() {
            let doc = dedup_subtitles(&v.document);
            let seq = TokenSequence::from_document(&doc, DEFAULT_MAX_LEN);
            let starts: Vec<usize> = v.annotations.iter().map(|a| a.span_start).collect();
            for (k, b) in seq.box_index_of.iter().enumerate() {
                if b.is_some() && (k == 0 || seq.is_separator(k - 1)) {
                    if starts.contains(&k) {
                        heading.push(seq.visual[k][2]);
                    } else {
                        body.push(seq.visual[k][2]);
                    }
                }
            }
        }
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let rel = (mean(&heading) - mean(&body)).abs() / mean(&body);
        assert!(rel < 0.02, "relative mean gap {rel}");
    }

    #[test]
    fn highlighted_headings_are_larger_and_higher() {
        let corpus = generate_synthetic_corpus(&small(20), 9).unwrap();
        for v in corpus {
            let doc = dedup_subtitles(&v.document);
            let seq = TokenSequence::from_document(&doc, DEFAULT_MAX_LEN);
            let max_body = seq
                .visual
                .iter()
                .zip(&seq.box_index_of)
                .filter(|(_, b)| b.is_some())
                .filter(|(_, b)| !v.annotations.iter().any(|a| seq.box_index_of[a.span_start] == **b))
                .map(|(v, _)| v[2])
                .fold(0.0, f64::max);
            for a in &v.annotations {
                let vis = seq.visual[a.span_start];
                assert!(vis[2] > max_body);
                assert!(vis[0] < 0.5);
            }
        }
    }

    #[test]
    fn articles_have_three_or_more_headings() {
        let articles = generate_synthetic_articles(&SynthConfig::default(), 50, 1).unwrap();
        assert!(articles.iter().all(|a| a.heading_count() >= 3));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SynthConfig {
            segments_min: 6,
            segments_max: 5,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic_corpus(&cfg, 0), Err(Error::Config(_))));
    }
}
