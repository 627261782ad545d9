use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::Linear;
use super::params::{normal_matrix, Grads, ParamGroup, ParamId, ParamStore};
use crate::{Error, Result};

/// Width of the visual feature rows `(top, left, size)`.
pub const VISUAL_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    None,
    Gate,
    Concat,
}

/// Nonlinearity applied to the gate pre-activation. ReLU is the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateActivation {
    #[default]
    Relu,
    Sigmoid,
}

impl GateActivation {
    fn apply(self, x: f64) -> f64 {
        match self {
            GateActivation::Relu => x.max(0.0),
            GateActivation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    fn grad(self, x: f64, y: f64) -> f64 {
        match self {
            GateActivation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            GateActivation::Sigmoid => y * (1.0 - y),
        }
    }
}

fn check_shapes(text: &ArrayView2<f64>, visual: &ArrayView2<f64>) -> Result<()> {
    if text.nrows() != visual.nrows() || visual.ncols() != VISUAL_DIM {
        return Err(Error::Shape(format!(
            "text {:?} vs visual {:?}",
            text.dim(),
            visual.dim()
        )));
    }
    Ok(())
}

/// `act(H^v W + b) ⊙ H^t`, row-wise.
pub fn fuse_gate(
    text: ArrayView2<f64>,
    visual: ArrayView2<f64>,
    weight: ArrayView2<f64>,
    bias: ArrayView2<f64>,
    activation: GateActivation,
) -> Result<Array2<f64>> {
    check_shapes(&text, &visual)?;
    if weight.dim() != (VISUAL_DIM, text.ncols()) || bias.dim() != (1, text.ncols()) {
        return Err(Error::Shape(format!("gate weight {:?}, bias {:?}", weight.dim(), bias.dim())));
    }
    let gate = (visual.dot(&weight) + bias).mapv(|v| activation.apply(v));
    Ok(gate * text)
}

/// `[H^t | H^v] W + b`, projecting `d + 3` back to `d`.
pub fn fuse_concat(
    text: ArrayView2<f64>,
    visual: ArrayView2<f64>,
    weight: ArrayView2<f64>,
    bias: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    check_shapes(&text, &visual)?;
    let d = text.ncols();
    if weight.dim() != (d + VISUAL_DIM, d) || bias.dim() != (1, d) {
        return Err(Error::Shape(format!("projection {:?}, bias {:?}", weight.dim(), bias.dim())));
    }
    let joined = concatenate(Axis(1), &[text.view(), visual.view()]).expect("row counts checked");
    Ok(joined.dot(&weight) + bias)
}

/// Trainable fusion layer registered in a [`ParamStore`].
#[derive(Clone, Debug)]
pub enum Fusion {
    None,
    Gate {
        weight: ParamId,
        bias: ParamId,
        activation: GateActivation,
    },
    Concat(Linear),
}

pub enum FusionCache {
    None,
    Gate { pre: Array2<f64>, gate: Array2<f64> },
    Concat { joined: Array2<f64> },
}

impl Fusion {
    /// The gate starts near identity (bias 1, small weights); the
    /// projection starts as identity on the text part.
    pub fn new<R: Rng>(
        kind: FusionKind,
        activation: GateActivation,
        store: &mut ParamStore,
        rng: &mut R,
        dim: usize,
    ) -> Self {
        match kind {
            FusionKind::None => Fusion::None,
            FusionKind::Gate => {
                let bias = match activation {
                    GateActivation::Relu => Array2::ones((1, dim)),
                    GateActivation::Sigmoid => Array2::zeros((1, dim)),
                };
                Fusion::Gate {
                    weight: store.add("fusion.gate.weight", ParamGroup::Base, normal_matrix(rng, VISUAL_DIM, dim, 0.1)),
                    bias: store.add("fusion.gate.bias", ParamGroup::Base, bias),
                    activation,
                }
            }
            FusionKind::Concat => {
                let mut weight = normal_matrix(rng, dim + VISUAL_DIM, dim, 0.1);
                weight.slice_mut(s![..dim, ..]).assign(&Array2::eye(dim));
                let lin = Linear {
                    weight: store.add("fusion.concat.weight", ParamGroup::Base, weight),
                    bias: store.add("fusion.concat.bias", ParamGroup::Base, Array2::zeros((1, dim))),
                };
                Fusion::Concat(lin)
            }
        }
    }

    pub fn kind(&self) -> FusionKind {
        match self {
            Fusion::None => FusionKind::None,
            Fusion::Gate { .. } => FusionKind::Gate,
            Fusion::Concat(_) => FusionKind::Concat,
        }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        text: Array2<f64>,
        visual: &Array2<f64>,
    ) -> Result<(Array2<f64>, FusionCache)> {
        match self {
            Fusion::None => Ok((text, FusionCache::None)),
            Fusion::Gate { weight, bias, activation } => {
                check_shapes(&text.view(), &visual.view())?;
                let pre = visual.dot(store.get(*weight)) + store.get(*bias);
                let gate = pre.mapv(|v| activation.apply(v));
                let out = &gate * &text;
                Ok((out, FusionCache::Gate { pre, gate }))
            }
            Fusion::Concat(lin) => {
                check_shapes(&text.view(), &visual.view())?;
                let joined = concatenate(Axis(1), &[text.view(), visual.view()]).expect("row counts checked");
                let out = lin.forward(store, joined.view());
                Ok((out, FusionCache::Concat { joined }))
            }
        }
    }

    /// Returns `dL/dH^t`. The text states are needed for the gate path.
    pub fn backward(
        &self,
        store: &ParamStore,
        text: &Array2<f64>,
        visual: &Array2<f64>,
        cache: &FusionCache,
        d_out: Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        match (self, cache) {
            (Fusion::None, _) => d_out,
            (Fusion::Gate { weight, bias, activation }, FusionCache::Gate { pre, gate }) => {
                let d_text = &d_out * gate;
                let mut d_pre = d_out * text;
                ndarray::Zip::from(&mut d_pre)
                    .and(pre)
                    .and(gate)
                    .for_each(|d, &x, &y| *d *= activation.grad(x, y));
                *grads.get_mut(*weight) += &visual.t().dot(&d_pre);
                *grads.get_mut(*bias) += &d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
                d_text
            }
            (Fusion::Concat(lin), FusionCache::Concat { joined }) => {
                let d_joined = lin.backward(store, joined.view(), d_out.view(), grads);
                let d = text.ncols();
                d_joined.slice(s![.., ..d]).to_owned()
            }
            _ => unreachable!("fusion cache does not match fusion kind"),
        }
    }
}
