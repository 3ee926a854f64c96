//! Adam over a flat parameter vector.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    /// Per-coordinate learning rates overriding `config.lr`, as `(index, lr)`.
    pub lr_overrides: Vec<(usize, f64)>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Adam { config, lr_overrides: Vec::new(), m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn with_lr_override(mut self, index: usize, lr: f64) -> Self {
        self.lr_overrides.push((index, lr));
        self
    }

    /// One bias-corrected step, `params -= lr · m̂ / (√v̂ + eps)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            let rate = self.lr_overrides.iter().find(|(j, _)| *j == i).map_or(lr, |&(_, r)| r);
            params[i] -= rate * mhat / (vhat.sqrt() + eps);
        }
    }
}
