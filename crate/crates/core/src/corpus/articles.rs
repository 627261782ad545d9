use serde::{Deserialize, Serialize};

use super::tokens::{TokenSequence, SEPARATOR};
use crate::tags::BioTag;
use crate::{Error, Result};

/// Articles with fewer headings than this are dropped from pretraining.
pub const MIN_HEADINGS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticleBlock {
    pub text: String,
    pub is_heading: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub article_id: String,
    pub blocks: Vec<ArticleBlock>,
}

impl ArticleRecord {
    pub fn heading_count(&self) -> usize {
        self.blocks.iter().filter(|b| b.is_heading).count()
    }
}

/// Comma-joins the blocks and tags heading characters B/I, everything else O.
pub fn build_heading_pretrain_example(
    article: &ArticleRecord,
) -> Result<(TokenSequence, Vec<BioTag>)> {
    let headings = article.heading_count();
    if headings < MIN_HEADINGS {
        return Err(Error::TooFewHeadings {
            article_id: article.article_id.clone(),
            headings,
        });
    }
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut box_index_of = Vec::new();
    for (i, block) in article.blocks.iter().enumerate() {
        if i > 0 {
            tokens.push(SEPARATOR);
            tags.push(BioTag::O);
            box_index_of.push(None);
        }
        for (j, c) in block.text.chars().enumerate() {
            tokens.push(c);
            box_index_of.push(Some(i));
            tags.push(match (block.is_heading, j) {
                (false, _) => BioTag::O,
                (true, 0) => BioTag::B,
                (true, _) => BioTag::I,
            });
        }
    }
    let n = tokens.len();
    let seq = TokenSequence {
        tokens,
        visual: vec![[0.0; 3]; n],
        timestamp_of: vec![0.0; n],
        box_index_of,
        truncated: false,
    };
    Ok((seq, tags))
}
