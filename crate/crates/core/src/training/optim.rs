use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::backends::ParamStore;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub learning_rate: f64,
    step: u64,
    first_moment: ParamStore,
    second_moment: ParamStore,
}

impl AdamW {
    pub fn new(config: AdamWConfig, learning_rate: f64, params: &ParamStore) -> Self {
        Self {
            config,
            learning_rate,
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every tensor named in `trainable`:
    /// `p <- p * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore, trainable: &BTreeSet<String>) {
        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let lr = self.learning_rate;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        for (name, p) in params.iter_mut() {
            if !trainable.contains(name) {
                continue;
            }
            let g = &grads.get(name).data;
            let m = &mut self.first_moment.get_mut(name).data;
            let v = &mut self.second_moment.get_mut(name).data;
            for i in 0..p.data.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p.data[i] *= 1.0 - lr * weight_decay;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::Tensor;

    fn single(value: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor { shape: vec![1], data: vec![value] });
        p
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut params = single(0.5);
        let grads = single(-0.2);
        let mut opt = AdamW::new(cfg, 0.1, &params);
        opt.step(&mut params, &grads, &BTreeSet::from(["w".to_string()]));
        // Bias-corrected moments equal g and g^2 after one step.
        let expected = 0.5 - 0.1 * (-0.2) / (0.2 + 1e-8);
        assert!((params.get("w").data[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn frozen_and_zero_lr_leave_params() {
        let mut params = single(0.5);
        let grads = single(3.0);
        let mut opt = AdamW::new(AdamWConfig::default(), 0.0, &params);
        opt.step(&mut params, &grads, &BTreeSet::from(["w".to_string()]));
        assert_eq!(params.get("w").data[0], 0.5);
        let mut opt = AdamW::new(AdamWConfig::default(), 0.1, &params);
        opt.step(&mut params, &grads, &BTreeSet::new());
        assert_eq!(params.get("w").data[0], 0.5);
    }

    #[test]
    fn decoupled_decay_without_gradient() {
        let mut params = single(2.0);
        let grads = single(0.0);
        let cfg = AdamWConfig {
            weight_decay: 0.5,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::new(cfg, 0.1, &params);
        opt.step(&mut params, &grads, &BTreeSet::from(["w".to_string()]));
        assert!((params.get("w").data[0] - 2.0 * 0.95).abs() < 1e-15);
    }
}
