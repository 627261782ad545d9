//! Binary model container: magic, format version, a JSON header describing
//! the model and its parameter table, then little-endian `f32` values in
//! table order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::ParamGroup;
use crate::extraction::{Extractor, ModelVariant};
use crate::model::{Tagger, TaggerConfig};
use crate::rewriter::{RewriteMode, Rewriter};
use crate::training::Pretrained;
use crate::vocab::Vocab;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"VOGCKPT\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ModelKind {
    Pretrained,
    Extractor { variant: ModelVariant },
    Rewriter { mode: RewriteMode },
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    group: ParamGroup,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelKind,
    tagger: TaggerConfig,
    vocab: String,
    max_len: usize,
    params: Vec<ParamEntry>,
}

/// A tagger with everything needed to rebuild the model around it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub tagger: Tagger,
    pub vocab: Vocab,
    pub max_len: usize,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.kind.clone(),
            tagger: self.tagger.config.clone(),
            vocab: self.vocab.as_string(),
            max_len: self.max_len,
            params: self
                .tagger
                .store
                .iter()
                .map(|p| ParamEntry {
                    name: p.name.clone(),
                    group: p.group,
                    shape: [p.value.nrows(), p.value.ncols()],
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serialization cannot fail");
        let mut out = Vec::with_capacity(20 + json.len() + 4 * self.tagger.store.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.tagger.store.iter() {
            for &v in p.value.iter() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a model checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header".into()))?;
        let header: Header =
            serde_json::from_slice(&bytes[20..header_end]).map_err(|e| bad(format!("bad header: {e}")))?;

        let mut tagger = Tagger::new(header.tagger, 0)?;
        if tagger.store.len() != header.params.len() {
            return Err(bad(format!(
                "parameter count {} does not match the architecture ({})",
                header.params.len(),
                tagger.store.len()
            )));
        }
        let mut data = bytes[header_end..].chunks_exact(4);
        let expected = 4 * tagger.store.num_scalars();
        if bytes.len() - header_end != expected {
            return Err(bad(format!(
                "expected {expected} bytes of parameters, found {}",
                bytes.len() - header_end
            )));
        }
        for (p, entry) in tagger.store.iter_mut().zip(&header.params) {
            if p.name != entry.name || p.group != entry.group || [p.value.nrows(), p.value.ncols()] != entry.shape {
                return Err(bad(format!("parameter `{}` does not match the architecture", entry.name)));
            }
            for v in p.value.iter_mut() {
                let chunk = data.next().expect("length checked");
                *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
            }
        }
        Ok(Checkpoint {
            kind: header.model,
            tagger,
            vocab: Vocab::from_string(&header.vocab),
            max_len: header.max_len,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::Pretrained => "pretrained",
            ModelKind::Extractor { .. } => "extractor",
            ModelKind::Rewriter { .. } => "rewriter",
        }
    }

    fn wrong_kind(&self, wanted: &str) -> Error {
        Error::Checkpoint(format!("expected a {wanted} checkpoint, found a {} checkpoint", self.kind_name()))
    }

    pub fn into_extractor(self) -> Result<Extractor> {
        match self.kind {
            ModelKind::Extractor { variant } => Ok(Extractor {
                variant,
                tagger: self.tagger,
                vocab: self.vocab,
                max_len: self.max_len,
            }),
            _ => Err(self.wrong_kind("extractor")),
        }
    }

    pub fn into_rewriter(self) -> Result<Rewriter> {
        match self.kind {
            ModelKind::Rewriter { mode } => Ok(Rewriter {
                mode,
                tagger: self.tagger,
                vocab: self.vocab,
                max_len: self.max_len,
            }),
            _ => Err(self.wrong_kind("rewriter")),
        }
    }

    pub fn into_pretrained(self) -> Result<Pretrained> {
        match self.kind {
            ModelKind::Pretrained => Ok(Pretrained {
                tagger: self.tagger,
                vocab: self.vocab,
            }),
            _ => Err(self.wrong_kind("pretrained")),
        }
    }
}

impl From<&Extractor> for Checkpoint {
    fn from(e: &Extractor) -> Self {
        Checkpoint {
            kind: ModelKind::Extractor {
                variant: e.variant.clone(),
            },
            tagger: e.tagger.clone(),
            vocab: e.vocab.clone(),
            max_len: e.max_len,
        }
    }
}

impl From<&Rewriter> for Checkpoint {
    fn from(r: &Rewriter) -> Self {
        Checkpoint {
            kind: ModelKind::Rewriter { mode: r.mode },
            tagger: r.tagger.clone(),
            vocab: r.vocab.clone(),
            max_len: r.max_len,
        }
    }
}

impl From<&Pretrained> for Checkpoint {
    fn from(p: &Pretrained) -> Self {
        Checkpoint {
            kind: ModelKind::Pretrained,
            max_len: p.tagger.config.encoder.max_positions,
            tagger: p.tagger.clone(),
            vocab: p.vocab.clone(),
        }
    }
}
