use std::collections::HashMap;

use super::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
}

/// Adam with bias correction. Only trainable parameters are touched.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    moments: HashMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            moments: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update and clears every gradient in `store`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if let Some(p) = store.iter().find(|p| p.trainable && p.tensor.grad().is_none()) {
            return Err(Error::Contract(format!(
                "trainable parameter `{}` has no gradient",
                p.key()
            )));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - (beta1 as f64).powi(self.t as i32);
        let bc2 = 1.0 - (beta2 as f64).powi(self.t as i32);
        for p in store.iter_mut().filter(|p| p.trainable) {
            let key = p.key();
            let n = p.tensor.len();
            let mom = self.moments.entry(key).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            let grad = p.tensor.grad_mut().take().unwrap_or_default();
            let data = p.tensor.data_mut();
            for i in 0..n {
                let g = grad[i];
                mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g;
                mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g * g;
                let m_hat = mom.m[i] as f64 / bc1;
                let v_hat = mom.v[i] as f64 / bc2;
                data[i] -= (lr as f64 * m_hat / (v_hat.sqrt() + epsilon as f64)) as f32;
            }
        }
        store.zero_grads();
        Ok(())
    }
}
