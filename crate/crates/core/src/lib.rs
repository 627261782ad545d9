//! Two-stage video outline generation.
//!
//! Subtitle boxes recognized from a video are joined into a character
//! sequence carrying per-token box geometry. A transformer tagger, whose
//! hidden states are modulated by the geometry, marks heading spans with BIO
//! tags through a CRF layer. Each span is traced back to the timestamp where
//! its segment begins, then rewritten into a short heading by a KEEP/DELETE
//! tagger. The evaluation scores segmentation points and headings, and
//! multiplies the two.

pub mod corpus;
pub mod checkpoint;
pub mod crf;
pub mod encoder;
mod error;
pub mod eval;
pub mod extraction;
pub mod model;
pub mod rewriter;
pub mod tags;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
