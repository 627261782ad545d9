use ndarray::{Array2, Zip};

use crate::encoder::{Grads, ParamGroup, ParamStore};

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(store: &ParamStore, weight_decay: f64) -> Self {
        let zeros = || store.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }

    /// One update. `lr` gives the rate of each parameter group; the decay
    /// shrinks every parameter by `1 - lr * weight_decay` before the
    /// moment-based step.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: impl Fn(ParamGroup) -> f64) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (((param, g), m), v) in store.iter_mut().zip(grads.iter()).zip(&mut self.m).zip(&mut self.v) {
            let rate = lr(param.group);
            let shrink = 1.0 - rate * self.weight_decay;
            Zip::from(&mut param.value).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p *= shrink;
                *p -= rate * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Scales `grads` so its global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_decay_is_multiplicative() {
        let mut store = ParamStore::new();
        store.add("w", ParamGroup::Base, array![[1.0, -2.0]]);
        store.add("c", ParamGroup::Crf, array![[4.0]]);
        let grads = store.zero_grads();
        let mut opt = AdamW::new(&store, 0.1);
        let lr = |g| if g == ParamGroup::Crf { 0.5 } else { 0.01 };
        let mut expected_w = array![[1.0, -2.0]];
        let mut expected_c = 4.0;
        for _ in 0..3 {
            opt.step(&mut store, &grads, lr);
            expected_w.mapv_inplace(|v| v * (1.0 - 0.01 * 0.1));
            expected_c *= 1.0 - 0.5 * 0.1;
        }
        let values: Vec<_> = store.iter().map(|p| p.value.clone()).collect();
        assert_eq!(values[0], expected_w);
        assert_eq!(values[1][[0, 0]], expected_c);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        store.add("w", ParamGroup::Base, array![[0.0, 0.0]]);
        let mut grads = store.zero_grads();
        grads.0[0] = array![[3.0, -0.5]];
        let mut opt = AdamW::new(&store, 0.0);
        opt.step(&mut store, &grads, |_| 0.1);
        let w = &store.iter().next().unwrap().value;
        assert!((w[[0, 0]] + 0.1).abs() < 1e-6 && (w[[0, 1]] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn clipping() {
        let mut store = ParamStore::new();
        store.add("w", ParamGroup::Base, array![[0.0, 0.0]]);
        let mut grads = store.zero_grads();
        grads.0[0] = array![[3.0, 4.0]];
        assert_eq!(clip_global_norm(&mut grads, 1.0), 5.0);
        assert!((grads.global_norm() - 1.0).abs() < 1e-12);
        clip_global_norm(&mut grads, 10.0);
        assert!((grads.global_norm() - 1.0).abs() < 1e-12);
    }
}
