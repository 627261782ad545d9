//! Line-delimited JSON records for subtitles, annotations and articles.
//!
//! Unknown fields are logged and ignored; missing fields are errors.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ArticleBlock, ArticleRecord, OutlineAnnotation, SubtitleBox, VideoDocument};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct SubtitleRecord {
    video_id: String,
    #[serde(rename = "D_h")]
    frame_height: f64,
    #[serde(rename = "D_w")]
    frame_width: f64,
    t: f64,
    text: String,
    d_tm: f64,
    d_lm: f64,
    d_h: f64,
    d_w: f64,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRecord {
    video_id: String,
    t: f64,
    span_start: usize,
    span_end: usize,
    rewritten: String,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockRecord {
    text: String,
    is_heading: bool,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArticleLine {
    article_id: String,
    blocks: Vec<BlockRecord>,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

fn warn_extra(line: usize, extra: &BTreeMap<String, Value>) {
    for key in extra.keys() {
        log::warn!("line {line}: ignoring unknown field `{key}`");
    }
}

/// Parses every non-blank line; line numbers are 1-based.
fn read_lines<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, record));
    }
    Ok(out)
}

fn to_line<T: Serialize>(record: &T) -> String {
    let mut s = serde_json::to_string(record).expect("record serialization cannot fail");
    s.push('\n');
    s
}

/// Reads a stream holding the boxes of exactly one video.
pub fn parse_video<R: BufRead>(reader: R) -> Result<VideoDocument> {
    let mut docs = parse_videos(reader)?;
    match docs.len() {
        0 => Err(Error::EmptyDocument(String::new())),
        1 => Ok(docs.remove(0)),
        n => Err(Error::Parse {
            line: 0,
            message: format!("expected one video, found {n}"),
        }),
    }
}

/// Reads a subtitle stream, grouping boxes by `video_id` in order of first
/// appearance. Boxes are stably sorted by timestamp.
pub fn parse_videos<R: BufRead>(reader: R) -> Result<Vec<VideoDocument>> {
    let records: Vec<(usize, SubtitleRecord)> = read_lines(reader)?;
    let mut docs: Vec<VideoDocument> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (line, r) in records {
        warn_extra(line, &r.extra);
        let slot = *index.entry(r.video_id.clone()).or_insert_with(|| {
            docs.push(VideoDocument {
                video_id: r.video_id.clone(),
                frame_height: r.frame_height,
                frame_width: r.frame_width,
                boxes: Vec::new(),
            });
            docs.len() - 1
        });
        let doc = &mut docs[slot];
        if doc.frame_height != r.frame_height || doc.frame_width != r.frame_width {
            return Err(Error::Parse {
                line,
                message: format!("frame size changes within video {}", r.video_id),
            });
        }
        doc.boxes.push(SubtitleBox {
            text: r.text,
            timestamp: r.t,
            top_margin: r.d_tm,
            left_margin: r.d_lm,
            height: r.d_h,
            width: r.d_w,
        });
    }
    for doc in &mut docs {
        doc.boxes
            .sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        doc.validate()?;
    }
    Ok(docs)
}

pub fn write_subtitles(docs: &[VideoDocument]) -> String {
    let mut out = String::new();
    for doc in docs {
        for b in &doc.boxes {
            out.push_str(&to_line(&SubtitleRecord {
                video_id: doc.video_id.clone(),
                frame_height: doc.frame_height,
                frame_width: doc.frame_width,
                t: b.timestamp,
                text: b.text.clone(),
                d_tm: b.top_margin,
                d_lm: b.left_margin,
                d_h: b.height,
                d_w: b.width,
                extra: BTreeMap::new(),
            }));
        }
    }
    out
}

pub fn read_annotations<R: BufRead>(reader: R) -> Result<Vec<OutlineAnnotation>> {
    let records: Vec<(usize, AnnotationRecord)> = read_lines(reader)?;
    records
        .into_iter()
        .map(|(line, r)| {
            warn_extra(line, &r.extra);
            if r.span_start > r.span_end {
                return Err(Error::Parse {
                    line,
                    message: format!("span_start {} > span_end {}", r.span_start, r.span_end),
                });
            }
            Ok(OutlineAnnotation {
                video_id: r.video_id,
                segmentation_time: r.t,
                span_start: r.span_start,
                span_end: r.span_end,
                rewritten: r.rewritten,
            })
        })
        .collect()
}

pub fn write_annotations(annotations: &[OutlineAnnotation]) -> String {
    annotations
        .iter()
        .map(|a| {
            to_line(&AnnotationRecord {
                video_id: a.video_id.clone(),
                t: a.segmentation_time,
                span_start: a.span_start,
                span_end: a.span_end,
                rewritten: a.rewritten.clone(),
                extra: BTreeMap::new(),
            })
        })
        .collect()
}

/// Reads articles without applying the heading-count filter.
pub fn read_articles<R: BufRead>(reader: R) -> Result<Vec<ArticleRecord>> {
    let records: Vec<(usize, ArticleLine)> = read_lines(reader)?;
    Ok(records
        .into_iter()
        .map(|(line, r)| {
            warn_extra(line, &r.extra);
            ArticleRecord {
                article_id: r.article_id,
                blocks: r
                    .blocks
                    .into_iter()
                    .map(|b| {
                        warn_extra(line, &b.extra);
                        ArticleBlock {
                            text: b.text,
                            is_heading: b.is_heading,
                        }
                    })
                    .collect(),
            }
        })
        .collect())
}

pub fn write_articles(articles: &[ArticleRecord]) -> String {
    articles
        .iter()
        .map(|a| {
            to_line(&ArticleLine {
                article_id: a.article_id.clone(),
                blocks: a
                    .blocks
                    .iter()
                    .map(|b| BlockRecord {
                        text: b.text.clone(),
                        is_heading: b.is_heading,
                        extra: BTreeMap::new(),
                    })
                    .collect(),
                extra: BTreeMap::new(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"video_id":"v1","D_h":720.0,"D_w":1280.0,"t":1.5,"text":"第一部分","d_tm":72.0,"d_lm":128.0,"d_h":72.0,"d_w":640.0}"#;

    #[test]
    fn subtitle_record_roundtrips() {
        let doc = parse_video(LINE.as_bytes()).unwrap();
        assert_eq!(doc.boxes[0].top_margin, 72.0);
        assert_eq!(doc.frame_height, 720.0);
        let written = write_subtitles(std::slice::from_ref(&doc));
        assert_eq!(written.trim_end(), LINE);
        assert_eq!(parse_video(written.as_bytes()).unwrap(), doc);
    }

    #[test]
    fn identical_adjacent_boxes_are_retained() {
        let second = LINE.replace("\"t\":1.5", "\"t\":2.0");
        let input = format!("{LINE}\n{second}\n");
        assert_eq!(parse_video(input.as_bytes()).unwrap().boxes.len(), 2);
    }

    #[test]
    fn geometry_violation_is_rejected() {
        let bad = LINE.replace("\"d_tm\":72.0", "\"d_tm\":649.0");
        let err = parse_video(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Geometry { .. }), "{err}");
    }

    #[test]
    fn missing_field_reports_line() {
        let bad = LINE.replace(",\"d_w\":640.0", "");
        let input = format!("{LINE}\n{bad}\n");
        match parse_videos(input.as_bytes()).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("d_w"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_field_is_ignored() {
        let extra = LINE.replace("}", ",\"download\":\"http://x\"}");
        assert_eq!(parse_video(extra.as_bytes()).unwrap().boxes.len(), 1);
    }

    #[test]
    fn boxes_sorted_and_videos_grouped() {
        let a = LINE.replace("\"t\":1.5", "\"t\":9.0");
        let other = LINE.replace("v1", "v2");
        let input = format!("{a}\n{other}\n{LINE}\n");
        let docs = parse_videos(input.as_bytes()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].video_id, "v1");
        assert_eq!(docs[0].timestamps(), vec![1.5, 9.0]);
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(parse_video("\n".as_bytes()), Err(Error::EmptyDocument(_))));
    }

    #[test]
    fn annotation_and_article_records() {
        let ann = r#"{"video_id":"v1","t":1.5,"span_start":0,"span_end":3,"rewritten":"第一"}"#;
        let parsed = read_annotations(ann.as_bytes()).unwrap();
        assert_eq!(parsed[0].span_end, 3);
        assert_eq!(write_annotations(&parsed).trim_end(), ann);

        let art = r#"{"article_id":"a","blocks":[{"text":"H","is_heading":true},{"text":"body","is_heading":false}]}"#;
        let parsed = read_articles(art.as_bytes()).unwrap();
        assert_eq!(parsed[0].blocks.len(), 2);
        assert_eq!(write_articles(&parsed).trim_end(), art);
    }
}
