//! A small post-LayerNorm transformer encoder trained from scratch, the
//! visual fusion layers and the token classification head.

mod fusion;
mod head;
pub mod layers;
pub mod params;

pub use fusion::{fuse_concat, fuse_gate, Fusion, FusionCache, FusionKind, GateActivation};
pub use head::{argmax_rows, classify_tokens, softmax_rows};
pub use params::{Grads, Param, ParamGroup, ParamId, ParamStore};

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use layers::{
    AttentionCache, Dropout, FeedForward, FeedForwardCache, LayerNorm, LayerNormCache, SelfAttention,
};
use params::normal_matrix;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_positions: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    /// Desk-scale defaults: d=64, 2 layers, 4 heads, feed-forward 256.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            model_dim: 64,
            layers: 2,
            heads: 4,
            ff_dim: 256,
            max_positions: crate::corpus::DEFAULT_MAX_LEN,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size < 2 || self.model_dim == 0 || self.heads == 0 || self.ff_dim == 0 {
            return bad(format!("degenerate encoder config {self:?}"));
        }
        if self.model_dim % self.heads != 0 {
            return bad(format!("model_dim {} not divisible by heads {}", self.model_dim, self.heads));
        }
        if self.max_positions == 0 {
            return bad("max_positions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct EncoderLayer {
    attention: SelfAttention,
    attention_norm: LayerNorm,
    feed_forward: FeedForward,
    output_norm: LayerNorm,
}

struct LayerCache {
    input: Array2<f64>,
    attention: AttentionCache,
    attention_dropout: Option<Array2<f64>>,
    attention_norm: LayerNormCache,
    mid: Array2<f64>,
    feed_forward: FeedForwardCache,
    ff_dropout: Option<Array2<f64>>,
    output_norm: LayerNormCache,
}

/// Forward-pass record needed by [`Encoder::backward`].
pub struct EncoderCache {
    tokens: Vec<usize>,
    embedding_norm: LayerNormCache,
    embedding_dropout: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    token_embedding: ParamId,
    position_embedding: ParamId,
    embedding_norm: LayerNorm,
    layers: Vec<EncoderLayer>,
}

impl Encoder {
    pub fn new<R: Rng>(config: EncoderConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim;
        let token_embedding = store.add(
            "embedding.token",
            ParamGroup::Base,
            normal_matrix(rng, config.vocab_size, d, 0.1),
        );
        let position_embedding = store.add(
            "embedding.position",
            ParamGroup::Base,
            normal_matrix(rng, config.max_positions, d, 0.1),
        );
        let embedding_norm = LayerNorm::new(store, "embedding.norm", d);
        let layers = (0..config.layers)
            .map(|l| {
                let name = format!("layer{l}");
                EncoderLayer {
                    attention: SelfAttention::new(store, rng, &format!("{name}.attention"), d, config.heads),
                    attention_norm: LayerNorm::new(store, &format!("{name}.attention_norm"), d),
                    feed_forward: FeedForward::new(store, rng, &format!("{name}.ffn"), d, config.ff_dim),
                    output_norm: LayerNorm::new(store, &format!("{name}.output_norm"), d),
                }
            })
            .collect();
        Ok(Encoder {
            config,
            token_embedding,
            position_embedding,
            embedding_norm,
            layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.model_dim
    }

    /// Contextual vectors `H^t` for one sequence. `mask[k] == false` marks a
    /// padding position: it is never attended to. Pass a generator to run in
    /// training mode (dropout on).
    pub fn forward(
        &self,
        store: &ParamStore,
        tokens: &[usize],
        mask: &[bool],
        mut train: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<f64>, EncoderCache)> {
        let n = tokens.len();
        if n > self.config.max_positions {
            return Err(Error::SequenceTooLong {
                len: n,
                max: self.config.max_positions,
            });
        }
        if mask.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: mask.len(),
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Shape(format!("token id {bad} >= vocab size {}", self.config.vocab_size)));
        }
        let d = self.dim();
        let rate = self.config.dropout;
        let tok = store.get(self.token_embedding);
        let pos = store.get(self.position_embedding);
        let mut x = Array2::zeros((n, d));
        for (k, &t) in tokens.iter().enumerate() {
            let mut row = x.row_mut(k);
            row += &tok.row(t);
            row += &pos.row(k);
        }
        let (x, embedding_norm) = self.embedding_norm.forward(store, &x);
        let embedding_dropout = Dropout::mask(train.as_deref_mut(), rate, (n, d));
        let mut x = Dropout::apply(x, &embedding_dropout);

        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (a, attention) = layer.attention.forward(store, &x, mask);
            let attention_dropout = Dropout::mask(train.as_deref_mut(), rate, (n, d));
            let a = Dropout::apply(a, &attention_dropout);
            let (mid, attention_norm) = layer.attention_norm.forward(store, &(&x + &a));
            let (f, feed_forward) = layer.feed_forward.forward(store, &mid);
            let ff_dropout = Dropout::mask(train.as_deref_mut(), rate, (n, d));
            let f = Dropout::apply(f, &ff_dropout);
            let (out, output_norm) = layer.output_norm.forward(store, &(&mid + &f));
            caches.push(LayerCache {
                input: x,
                attention,
                attention_dropout,
                attention_norm,
                mid,
                feed_forward,
                ff_dropout,
                output_norm,
            });
            x = out;
        }
        Ok((
            x,
            EncoderCache {
                tokens: tokens.to_vec(),
                embedding_norm,
                embedding_dropout,
                layers: caches,
            },
        ))
    }

    /// Accumulates parameter gradients given `dL/dH^t`.
    pub fn backward(&self, store: &ParamStore, cache: &EncoderCache, d_out: Array2<f64>, grads: &mut Grads) {
        let mut dx = d_out;
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let d_res2 = layer.output_norm.backward(store, &c.output_norm, &dx, grads);
            let d_f = Dropout::apply(d_res2.clone(), &c.ff_dropout);
            let mut d_mid = layer.feed_forward.backward(store, &c.mid, &c.feed_forward, &d_f, grads);
            d_mid += &d_res2;
            let d_res1 = layer.attention_norm.backward(store, &c.attention_norm, &d_mid, grads);
            let d_a = Dropout::apply(d_res1.clone(), &c.attention_dropout);
            let mut d_in = layer.attention.backward(store, &c.input, &c.attention, &d_a, grads);
            d_in += &d_res1;
            dx = d_in;
        }
        let dx = Dropout::apply(dx, &cache.embedding_dropout);
        let d_emb = self.embedding_norm.backward(store, &cache.embedding_norm, &dx, grads);
        {
            let g_tok = grads.get_mut(self.token_embedding);
            for (k, &t) in cache.tokens.iter().enumerate() {
                let mut row = g_tok.row_mut(t);
                row += &d_emb.row(k);
            }
        }
        let g_pos = grads.get_mut(self.position_embedding);
        let n = cache.tokens.len();
        let mut rows = g_pos.slice_mut(ndarray::s![..n, ..]);
        rows += &d_emb;
    }

    /// Evaluation-mode encoding of a padded batch: `tokens` and `mask` are
    /// `batch x len`. Returns one `len x d` matrix per batch row; rows at
    /// padded positions are computed but carry no meaning.
    pub fn encode(&self, store: &ParamStore, tokens: &Array2<usize>, mask: &Array2<bool>) -> Result<Vec<Array2<f64>>> {
        if tokens.dim() != mask.dim() {
            return Err(Error::Shape(format!("tokens {:?} vs mask {:?}", tokens.dim(), mask.dim())));
        }
        tokens
            .axis_iter(Axis(0))
            .zip(mask.axis_iter(Axis(0)))
            .map(|(t, m)| {
                let t: Vec<usize> = t.to_vec();
                let m: Vec<bool> = m.to_vec();
                self.forward(store, &t, &m, None).map(|(h, _)| h)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny() -> (Encoder, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let config = EncoderConfig {
            vocab_size: 12,
            model_dim: 8,
            layers: 2,
            heads: 2,
            ff_dim: 16,
            max_positions: 10,
            dropout: 0.1,
        };
        (Encoder::new(config, &mut store, &mut rng).unwrap(), store)
    }

    #[test]
    fn output_shape() {
        let (enc, store) = tiny();
        for n in 1..=10 {
            let tokens: Vec<usize> = (0..n).map(|i| i % 12).collect();
            let (h, _) = enc.forward(&store, &tokens, &vec![true; n], None).unwrap();
            assert_eq!(h.dim(), (n, 8));
            assert!(h.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn too_long_is_rejected() {
        let (enc, store) = tiny();
        let tokens = vec![2; 11];
        assert!(matches!(
            enc.forward(&store, &tokens, &[true; 11], None),
            Err(Error::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn batch_is_equivariant_and_padding_is_invisible() {
        let (enc, store) = tiny();
        let a = [3usize, 4, 5, 6, 0, 0];
        let b = [7usize, 8, 9, 10, 11, 2];
        let ma = [true, true, true, true, false, false];
        let mb = [true; 6];
        let tokens = Array2::from_shape_vec((3, 6), [a, b, a].concat()).unwrap();
        let mask = Array2::from_shape_vec((3, 6), [ma, mb, ma].concat()).unwrap();
        let out = enc.encode(&store, &tokens, &mask).unwrap();
        assert_eq!(out[0], out[2]);

        let swapped = Array2::from_shape_vec((2, 6), [b, a].concat()).unwrap();
        let swapped_mask = Array2::from_shape_vec((2, 6), [mb, ma].concat()).unwrap();
        let out2 = enc.encode(&store, &swapped, &swapped_mask).unwrap();
        assert_eq!(out2[0], out[1]);
        assert_eq!(out2[1], out[0]);

        let (unpadded, _) = enc.forward(&store, &a[..4], &[true; 4], None).unwrap();
        let diff = (&out[0].slice(ndarray::s![..4, ..]) - &unpadded).mapv(f64::abs);
        assert!(diff.iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn dropout_only_in_training_mode() {
        let (enc, store) = tiny();
        let tokens = [1usize, 2, 3, 4];
        let (eval_a, _) = enc.forward(&store, &tokens, &[true; 4], None).unwrap();
        let (eval_b, _) = enc.forward(&store, &tokens, &[true; 4], None).unwrap();
        assert_eq!(eval_a, eval_b);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (train, _) = enc.forward(&store, &tokens, &[true; 4], Some(&mut rng)).unwrap();
        assert_ne!(train, eval_a);
    }
}
