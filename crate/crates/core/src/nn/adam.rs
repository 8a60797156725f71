//! Adam optimizer over a [`ParamSet`].

use std::collections::HashMap;

use crate::nn::{ParamSet, Tensor};

/// Adam with per-parameter first/second moment state, keyed by parameter
/// index so the state survives across steps and checkpoints.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: HashMap<usize, Tensor>,
    v: HashMap<usize, Tensor>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update. `grads` maps parameter index to gradient;
    /// `lr_scale` multiplies the base learning rate (scheduling hook).
    /// Non-trainable parameters are never touched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[(usize, Tensor)], lr_scale: f64) {
        self.t += 1;
        let lr = self.lr * lr_scale;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, grad) in grads {
            if !params.is_trainable(*idx) {
                continue;
            }
            let m = self
                .m
                .entry(*idx)
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let v = self
                .v
                .entry(*idx)
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let p = params.value_mut_by_idx(*idx);
            let pd = p.data_mut();
            for i in 0..pd.len() {
                let g = grad.data()[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * g;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }

    /// Moment state for checkpointing: `(param index, m, v)`.
    pub fn state(&self) -> Vec<(usize, &Tensor, &Tensor)> {
        let mut keys: Vec<usize> = self.m.keys().copied().collect();
        keys.sort_unstable();
        keys.iter()
            .map(|k| (*k, self.m.get(k).unwrap(), self.v.get(k).unwrap()))
            .collect()
    }

    pub fn restore(&mut self, t: u64, entries: Vec<(usize, Tensor, Tensor)>) {
        self.t = t;
        self.m.clear();
        self.v.clear();
        for (idx, m, v) in entries {
            self.m.insert(idx, m);
            self.v.insert(idx, v);
        }
    }
}
