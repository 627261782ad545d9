//! The full tagging network: encoder, optional visual fusion, a linear
//! emission head and an optional CRF layer.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crf::{self, Constraints, CrfParams};
use crate::encoder::layers::Linear;
use crate::encoder::{
    argmax_rows, softmax_rows, Encoder, EncoderCache, EncoderConfig, Fusion, FusionCache, FusionKind,
    GateActivation, Grads, ParamGroup, ParamId, ParamStore,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub encoder: EncoderConfig,
    pub labels: usize,
    pub fusion: FusionKind,
    #[serde(default)]
    pub gate_activation: GateActivation,
    pub crf: bool,
}

#[derive(Clone, Copy, Debug)]
struct CrfIds {
    transitions: ParamId,
    start: ParamId,
    end: ParamId,
}

/// One supervised sequence. With `slots`, the loss and predictions are read
/// only at those token positions and `gold` has one label per slot.
#[derive(Clone, Debug)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub visual: Array2<f64>,
    pub gold: Vec<usize>,
    pub slots: Option<Vec<usize>>,
}

pub struct TaggerCache {
    encoder: EncoderCache,
    text: Array2<f64>,
    fusion: FusionCache,
    fused: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct Tagger {
    pub config: TaggerConfig,
    pub store: ParamStore,
    encoder: Encoder,
    fusion: Fusion,
    head: Linear,
    crf: Option<CrfIds>,
}

impl Tagger {
    pub fn new(config: TaggerConfig, seed: u64) -> Result<Self> {
        if config.labels < 2 {
            return Err(Error::Config("a tagger needs at least two labels".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(config.encoder.clone(), &mut store, &mut rng)?;
        let d = encoder.dim();
        let fusion = Fusion::new(config.fusion, config.gate_activation, &mut store, &mut rng, d);
        let head = Linear::new(&mut store, &mut rng, "head", d, config.labels, ParamGroup::Base);
        let crf = config.crf.then(|| {
            let l = config.labels;
            CrfIds {
                transitions: store.add("crf.transitions", ParamGroup::Crf, Array2::zeros((l, l))),
                start: store.add("crf.start", ParamGroup::Crf, Array2::zeros((1, l))),
                end: store.add("crf.end", ParamGroup::Crf, Array2::zeros((1, l))),
            }
        });
        Ok(Tagger {
            config,
            store,
            encoder,
            fusion,
            head,
            crf,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn fusion(&self) -> &Fusion {
        &self.fusion
    }

    pub fn uses_crf(&self) -> bool {
        self.crf.is_some()
    }

    pub fn crf_params(&self) -> Option<CrfParams> {
        self.crf.map(|ids| CrfParams {
            transitions: self.store.get(ids.transitions).clone(),
            start: self.store.get(ids.start).row(0).to_owned(),
            end: self.store.get(ids.end).row(0).to_owned(),
        })
    }

    /// Copies every parameter whose name and shape match one in `other`.
    /// Returns how many were copied.
    pub fn load_matching(&mut self, other: &ParamStore) -> usize {
        let mut copied = 0;
        for p in self.store.iter_mut() {
            if let Some(id) = other.find(&p.name) {
                let src = other.get(id);
                if src.dim() == p.value.dim() {
                    p.value.assign(src);
                    copied += 1;
                }
            }
        }
        copied
    }

    /// Per-token emission scores (`n x labels`).
    pub fn forward(
        &self,
        tokens: &[usize],
        visual: &Array2<f64>,
        train: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<f64>, TaggerCache)> {
        let mask = vec![true; tokens.len()];
        let (text, encoder) = self.encoder.forward(&self.store, tokens, &mask, train)?;
        let (fused, fusion) = self.fusion.forward(&self.store, text.clone(), visual)?;
        let emissions = self.head.forward(&self.store, fused.view());
        Ok((
            emissions,
            TaggerCache {
                encoder,
                text,
                fusion,
                fused,
            },
        ))
    }

    pub fn backward(&self, cache: &TaggerCache, visual: &Array2<f64>, d_emissions: Array2<f64>, grads: &mut Grads) {
        let d_fused = self.head.backward(&self.store, cache.fused.view(), d_emissions.view(), grads);
        let d_text = self
            .fusion
            .backward(&self.store, &cache.text, visual, &cache.fusion, d_fused, grads);
        self.encoder.backward(&self.store, &cache.encoder, d_text, grads);
    }

    fn gather(emissions: &Array2<f64>, slots: Option<&[usize]>) -> Array2<f64> {
        match slots {
            Some(s) => emissions.select(Axis(0), s),
            None => emissions.clone(),
        }
    }

    /// Loss of one example: CRF negative log-likelihood when the tagger has
    /// a CRF, otherwise mean token cross-entropy.
    pub fn loss(&self, example: &Example, train: Option<&mut ChaCha8Rng>) -> Result<(f64, Grads)> {
        let mut grads = self.store.zero_grads();
        let loss = self.accumulate_loss(example, train, &mut grads)?;
        Ok((loss, grads))
    }

    /// Like [`Tagger::loss`], adding the gradient into `grads`.
    pub fn accumulate_loss(
        &self,
        example: &Example,
        train: Option<&mut ChaCha8Rng>,
        grads: &mut Grads,
    ) -> Result<f64> {
        let (emissions, cache) = self.forward(&example.tokens, &example.visual, train)?;
        let (loss, d_picked, crf_grads) = self.loss_from_emissions(&emissions, example)?;
        if let (Some(g), Some(ids)) = (crf_grads, self.crf) {
            *grads.get_mut(ids.transitions) += &g.transitions;
            *grads.get_mut(ids.start) += &g.start.insert_axis(Axis(0));
            *grads.get_mut(ids.end) += &g.end.insert_axis(Axis(0));
        }
        let mut d_emissions = Array2::zeros(emissions.raw_dim());
        match example.slots.as_deref() {
            Some(slots) => {
                for (row, &pos) in slots.iter().enumerate() {
                    let mut target = d_emissions.row_mut(pos);
                    target += &d_picked.row(row);
                }
            }
            None => d_emissions.assign(&d_picked),
        }
        self.backward(&cache, &example.visual, d_emissions, grads);
        Ok(loss)
    }

    /// Loss value only, in evaluation mode.
    pub fn loss_value(&self, example: &Example) -> Result<f64> {
        let (emissions, _) = self.forward(&example.tokens, &example.visual, None)?;
        Ok(self.loss_from_emissions(&emissions, example)?.0)
    }

    /// Loss, its gradient w.r.t. the selected emission rows, and the CRF
    /// parameter gradients when there is a CRF.
    fn loss_from_emissions(
        &self,
        emissions: &Array2<f64>,
        example: &Example,
    ) -> Result<(f64, Array2<f64>, Option<crf::CrfGradients>)> {
        let picked = Self::gather(emissions, example.slots.as_deref());
        if picked.nrows() != example.gold.len() {
            return Err(Error::LengthMismatch {
                expected: picked.nrows(),
                actual: example.gold.len(),
            });
        }
        if picked.nrows() == 0 {
            return Ok((0.0, picked, None));
        }
        let (loss, d_picked, crf_grads) = match self.crf_params() {
            Some(params) => {
                let (loss, g) = crf::nll_loss(picked.view(), &params, &example.gold)?;
                let d = g.emissions.clone();
                (loss, d, Some(g))
            }
            None => {
                let probs = softmax_rows(picked.view());
                let m = example.gold.len() as f64;
                let mut loss = 0.0;
                let mut d = probs.clone();
                for (k, &g) in example.gold.iter().enumerate() {
                    if g >= self.config.labels {
                        return Err(Error::TagOutOfRange {
                            tag: g,
                            labels: self.config.labels,
                        });
                    }
                    loss -= probs[[k, g]].max(f64::MIN_POSITIVE).ln();
                    d[[k, g]] -= 1.0;
                }
                d.mapv_inplace(|v| v / m);
                (loss / m, d, None)
            }
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        Ok((loss, d_picked, crf_grads))
    }

    /// Label indices for one sequence (or its slots). CRF taggers decode
    /// with Viterbi under `constraints`; others take the per-token argmax.
    pub fn predict(
        &self,
        tokens: &[usize],
        visual: &Array2<f64>,
        slots: Option<&[usize]>,
        constraints: Constraints,
    ) -> Result<Vec<usize>> {
        let (emissions, _) = self.forward(tokens, visual, None)?;
        let picked = Self::gather(&emissions, slots);
        if picked.nrows() == 0 {
            return Ok(Vec::new());
        }
        match self.crf_params() {
            Some(params) => Ok(crf::viterbi(picked.view(), &params, constraints)?.0),
            None => Ok(argmax_rows(softmax_rows(picked.view()).view())),
        }
    }

    /// Label distributions per token from the emission head.
    pub fn probabilities(&self, tokens: &[usize], visual: &Array2<f64>) -> Result<Array2<f64>> {
        let (emissions, _) = self.forward(tokens, visual, None)?;
        Ok(softmax_rows(emissions.view()))
    }
}
