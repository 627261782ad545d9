//! Building blocks with explicit forward caches and hand-written backward
//! passes. Every `backward` accumulates parameter gradients into a
//! [`Grads`] buffer and returns the gradient of its input.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{normal_matrix, Grads, ParamGroup, ParamId, ParamStore};

/// Additive score for masked attention keys. Finite, so a fully masked row
/// stays well defined; `exp` of it underflows to exactly zero.
const MASK_SCORE: f64 = -1e9;
const LN_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        group: ParamGroup,
    ) -> Self {
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        Linear {
            weight: store.add(format!("{name}.weight"), group, normal_matrix(rng, fan_in, fan_out, std)),
            bias: store.add(format!("{name}.bias"), group, Array2::zeros((1, fan_out))),
        }
    }

    pub fn forward(&self, store: &ParamStore, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(store.get(self.weight)) + store.get(self.bias)
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        general_mat_mul(1.0, &x.t(), &dy, 1.0, grads.get_mut(self.weight));
        *grads.get_mut(self.bias) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&store.get(self.weight).t())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), ParamGroup::Base, Array2::ones((1, dim))),
            beta: store.add(format!("{name}.beta"), ParamGroup::Base, Array2::zeros((1, dim))),
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let dim = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / dim;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / dim;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| v * inv);
            inv_std.push(inv);
        }
        let y = &xhat * store.get(self.gamma) + store.get(self.beta);
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &LayerNormCache,
        dy: &Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        *grads.get_mut(self.gamma) += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        *grads.get_mut(self.beta) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = dy * store.get(self.gamma);
        let dim = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        for (r, mut out) in dx.rows_mut().into_iter().enumerate() {
            let g = dxhat.row(r);
            let xh = cache.xhat.row(r);
            let sum_g = g.sum();
            let sum_gx = g.dot(&xh);
            let scale = cache.inv_std[r] / dim;
            for c in 0..out.len() {
                out[c] = scale * (dim * g[c] - sum_g - xh[c] * sum_gx);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[derive(Clone, Copy, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

pub struct FeedForwardCache {
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl FeedForward {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, dim: usize, hidden: usize) -> Self {
        FeedForward {
            inner: Linear::new(store, rng, &format!("{name}.inner"), dim, hidden, ParamGroup::Base),
            outer: Linear::new(store, rng, &format!("{name}.outer"), hidden, dim, ParamGroup::Base),
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre = self.inner.forward(store, x.view());
        let act = pre.mapv(gelu);
        let y = self.outer.forward(store, act.view());
        (y, FeedForwardCache { pre, act })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Array2<f64>,
        cache: &FeedForwardCache,
        dy: &Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let d_act = self.outer.backward(store, cache.act.view(), dy.view(), grads);
        let d_pre = d_act * cache.pre.mapv(gelu_grad);
        self.inner.backward(store, x.view(), d_pre.view(), grads)
    }
}

/// Multi-head scaled dot-product self-attention with key masking.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

pub struct AttentionCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
}

impl SelfAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, dim: usize, heads: usize) -> Self {
        let mut lin = |part: &str| Linear::new(store, rng, &format!("{name}.{part}"), dim, dim, ParamGroup::Base);
        SelfAttention {
            query: lin("query"),
            key: lin("key"),
            value: lin("value"),
            output: lin("output"),
            heads,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>, mask: &[bool]) -> (Array2<f64>, AttentionCache) {
        let (n, dim) = x.dim();
        let dh = dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.query.forward(store, x.view());
        let k = self.key.forward(store, x.view());
        let v = self.value.forward(store, x.view());
        let mut context = Array2::zeros((n, dim));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            for mut row in scores.rows_mut() {
                for (j, s) in row.iter_mut().enumerate() {
                    *s = if mask[j] { *s * scale } else { MASK_SCORE };
                }
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|s| (s - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|s| s / sum);
            }
            general_mat_mul(1.0, &scores, &v.slice(cols), 0.0, &mut context.slice_mut(cols));
            probs.push(scores);
        }
        let out = self.output.forward(store, context.view());
        (out, AttentionCache { q, k, v, probs, context })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Array2<f64>,
        cache: &AttentionCache,
        dy: &Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let (n, dim) = x.dim();
        let dh = dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let d_context = self.output.backward(store, cache.context.view(), dy.view(), grads);
        let mut dq = Array2::zeros((n, dim));
        let mut dk = Array2::zeros((n, dim));
        let mut dv = Array2::zeros((n, dim));
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let p = &cache.probs[h];
            let d_ctx = d_context.slice(cols);
            let dp = d_ctx.dot(&cache.v.slice(cols).t());
            general_mat_mul(1.0, &p.t(), &d_ctx, 0.0, &mut dv.slice_mut(cols));
            let mut ds = dp;
            for (mut ds_row, p_row) in ds.rows_mut().into_iter().zip(p.rows()) {
                let dot = ds_row.dot(&p_row);
                for (d, &pv) in ds_row.iter_mut().zip(p_row.iter()) {
                    *d = pv * (*d - dot) * scale;
                }
            }
            general_mat_mul(1.0, &ds, &cache.k.slice(cols), 0.0, &mut dq.slice_mut(cols));
            general_mat_mul(1.0, &ds.t(), &cache.q.slice(cols), 0.0, &mut dk.slice_mut(cols));
        }
        let mut dx = self.query.backward(store, x.view(), dq.view(), grads);
        dx += &self.key.backward(store, x.view(), dk.view(), grads);
        dx += &self.value.backward(store, x.view(), dv.view(), grads);
        dx
    }
}

/// Inverted dropout; `None` masks mean evaluation mode.
pub struct Dropout;

impl Dropout {
    pub fn mask(rng: Option<&mut ChaCha8Rng>, rate: f64, shape: (usize, usize)) -> Option<Array2<f64>> {
        let rng = rng?;
        if rate <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - rate);
        Some(Array2::from_shape_simple_fn(shape, || {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        }))
    }

    pub fn apply(x: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
        match mask {
            Some(m) => x * m,
            None => x,
        }
    }
}
