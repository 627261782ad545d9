//! Optimization loops for heading-detection pretraining, extractor training
//! and rewriter training.

mod config;
mod optim;

pub use config::{Schedule, TrainConfig};
pub use optim::{clip_global_norm, AdamW};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{build_heading_pretrain_example, ArticleRecord, OutlineAnnotation, VideoDocument, SEPARATOR};
use crate::encoder::{EncoderConfig, FusionKind, GateActivation, ParamGroup};
use crate::extraction::{Extractor, ModelVariant};
use crate::model::{Example, Tagger, TaggerConfig};
use crate::rewriter::{EditSet, RewriteMode, Rewriter};
use crate::tags::to_indices;
use crate::vocab::Vocab;
use crate::{Error, Result};

/// What a training run did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub steps: usize,
    pub examples: usize,
    /// Mean loss of each optimizer step's batch.
    pub step_losses: Vec<f64>,
    /// Mean loss per completed epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn first_loss(&self) -> Option<f64> {
        self.step_losses.first().copied()
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.step_losses.last().copied()
    }
}

/// SplitMix64 finalizer, used to derive independent per-example seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mini-batch AdamW over `examples`. Batches are drawn from a per-epoch
/// shuffle; the gradient is the batch mean. Everything random derives from
/// `config.seed`, so runs are reproducible.
pub fn fit(tagger: &mut Tagger, examples: &[Example], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet("no training examples".into()));
    }
    let total = config.total_steps(examples.len());
    let mut optimizer = AdamW::new(&tagger.store, config.weight_decay);
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix(config.seed));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut report = TrainReport {
        examples: examples.len(),
        ..TrainReport::default()
    };
    let mut step = 0;
    'epochs: while step < total {
        order.shuffle(&mut order_rng);
        let mut epoch_sum = 0.0;
        let mut epoch_batches = 0;
        for batch in order.chunks(config.batch_size) {
            if step >= total {
                break 'epochs;
            }
            let mut grads = tagger.store.zero_grads();
            let mut loss = 0.0;
            for (j, &i) in batch.iter().enumerate() {
                let mut dropout = ChaCha8Rng::seed_from_u64(mix(config.seed ^ mix((step * config.batch_size + j) as u64)));
                loss += tagger.accumulate_loss(&examples[i], Some(&mut dropout), &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            grads.scale(scale);
            loss *= scale;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            clip_global_norm(&mut grads, config.grad_clip);
            let factor = config.lr_scale(step, total);
            optimizer.step(&mut tagger.store, &grads, |group| {
                factor
                    * match group {
                        ParamGroup::Base => config.learning_rate,
                        ParamGroup::Crf => config.crf_learning_rate,
                    }
            });
            report.step_losses.push(loss);
            epoch_sum += loss;
            epoch_batches += 1;
            step += 1;
        }
        let mean = epoch_sum / epoch_batches as f64;
        log::info!("epoch {} mean loss {mean:.4} ({step}/{total} steps)", report.epoch_losses.len() + 1);
        report.epoch_losses.push(mean);
    }
    report.steps = step;
    Ok(report)
}

/// A tagger with the vocabulary it was trained under.
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub tagger: Tagger,
    pub vocab: Vocab,
}

/// Trains an encoder and a three-label token head with cross-entropy on
/// article heading detection. Articles with too few headings are skipped.
/// `extra_chars` widens the vocabulary, e.g. with characters of the video
/// corpus fine-tuned on later.
pub fn pretrain_heading_detector(
    articles: &[ArticleRecord],
    encoder: &EncoderConfig,
    extra_chars: &str,
    config: &TrainConfig,
) -> Result<(Pretrained, TrainReport)> {
    let mut sequences = Vec::new();
    let mut skipped = 0;
    for article in articles {
        match build_heading_pretrain_example(article) {
            Ok(pair) => sequences.push(pair),
            Err(Error::TooFewHeadings { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if skipped > 0 {
        log::info!("skipped {skipped} articles with too few headings");
    }
    if sequences.is_empty() {
        return Err(Error::EmptyTrainingSet("no article has enough headings".into()));
    }
    let vocab = Vocab::build(
        sequences
            .iter()
            .flat_map(|(s, _)| s.tokens.iter().copied())
            .chain(extra_chars.chars())
            .chain([SEPARATOR]),
    );
    let encoder = EncoderConfig {
        vocab_size: vocab.len(),
        ..encoder.clone()
    };
    let max_len = encoder.max_positions;
    let mut tagger = Tagger::new(
        TaggerConfig {
            encoder,
            labels: 3,
            fusion: FusionKind::None,
            gate_activation: GateActivation::Relu,
            crf: false,
        },
        config.seed,
    )?;
    let examples: Vec<Example> = sequences
        .iter()
        .map(|(seq, tags)| {
            let n = seq.len().min(max_len);
            Example {
                tokens: vocab.encode(&seq.tokens[..n]),
                visual: ndarray::Array2::zeros((n, 3)),
                gold: to_indices(&tags[..n]),
                slots: None,
            }
        })
        .collect();
    let report = fit(&mut tagger, &examples, config)?;
    tagger.store.quantize_f32();
    Ok((Pretrained { tagger, vocab }, report))
}

/// Annotations grouped by video id.
pub fn annotations_by_video(annotations: &[OutlineAnnotation]) -> BTreeMap<&str, Vec<OutlineAnnotation>> {
    let mut map: BTreeMap<&str, Vec<OutlineAnnotation>> = BTreeMap::new();
    for a in annotations {
        map.entry(a.video_id.as_str()).or_default().push(a.clone());
    }
    map
}

/// Trains an extractor of the given variant. Variants that use
/// pretraining must be given `init`; the others must not.
pub fn train_extractor(
    documents: &[VideoDocument],
    annotations: &[OutlineAnnotation],
    variant: &ModelVariant,
    encoder: &EncoderConfig,
    config: &TrainConfig,
    init: Option<&Pretrained>,
) -> Result<(Extractor, TrainReport)> {
    let mut extractor = match (variant.uses_pretraining, init) {
        (true, Some(init)) => {
            let mut extractor = Extractor::new(
                variant.clone(),
                init.vocab.clone(),
                init.tagger.config.encoder.clone(),
                config.seed,
            )?;
            let copied = extractor.tagger.load_matching(&init.tagger.store);
            log::info!("initialized {copied} parameter tensors from the pretrained model");
            extractor
        }
        (false, None) => {
            let vocab = Vocab::build(
                documents
                    .iter()
                    .flat_map(|d| d.boxes.iter().flat_map(|b| b.text.chars()))
                    .chain([SEPARATOR]),
            );
            let encoder = EncoderConfig {
                vocab_size: vocab.len(),
                ..encoder.clone()
            };
            Extractor::new(variant.clone(), vocab, encoder, config.seed)?
        }
        (true, None) => {
            return Err(Error::Variant(format!("{} needs a pretrained initialization", variant.name)));
        }
        (false, Some(_)) => {
            return Err(Error::Variant(format!("{} does not use pretraining", variant.name)));
        }
    };
    let by_video = annotations_by_video(annotations);
    let mut examples = Vec::with_capacity(documents.len());
    for doc in documents {
        let seq = extractor.sequence(doc);
        if seq.is_empty() {
            continue;
        }
        let gold = by_video.get(doc.video_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        examples.push(extractor.example(&seq, gold)?);
    }
    let report = fit(&mut extractor.tagger, &examples, config)?;
    extractor.tagger.store.quantize_f32();
    Ok((extractor, report))
}

/// (span text, gold heading) for every annotation, with span text read
/// from the deduplicated token sequence.
pub fn rewrite_pairs(
    documents: &[VideoDocument],
    annotations: &[OutlineAnnotation],
    max_len: usize,
) -> Vec<(String, String)> {
    let by_video = annotations_by_video(annotations);
    let mut pairs = Vec::new();
    for doc in documents {
        let seq = crate::corpus::TokenSequence::from_document(&crate::corpus::dedup_subtitles(doc), max_len);
        for a in by_video.get(doc.video_id.as_str()).into_iter().flatten() {
            if a.span_start < seq.len() {
                pairs.push((seq.text(a.span_start, a.span_end.min(seq.len() - 1)), a.rewritten.clone()));
            }
        }
    }
    pairs
}

/// Trains a KEEP/DELETE tagger on the convertible examples of `edits`.
pub fn train_rewriter(
    edits: &EditSet,
    mode: RewriteMode,
    encoder: &EncoderConfig,
    config: &TrainConfig,
) -> Result<(Rewriter, TrainReport)> {
    if edits.examples.is_empty() {
        return Err(Error::EmptyTrainingSet(format!(
            "no convertible rewrite pairs ({} excluded)",
            edits.excluded
        )));
    }
    let vocab = Vocab::build(edits.examples.iter().flat_map(|e| e.source.iter().copied()));
    let encoder = EncoderConfig {
        vocab_size: vocab.len(),
        ..encoder.clone()
    };
    let mut rewriter = Rewriter::new(mode, vocab, encoder, config.seed)?;
    let examples: Vec<Example> = edits.examples.iter().map(|e| rewriter.example(e)).collect();
    let report = fit(&mut rewriter.tagger, &examples, config)?;
    rewriter.tagger.store.quantize_f32();
    Ok((rewriter, report))
}
