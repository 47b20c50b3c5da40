//! Adam optimizer with bias correction.

use crate::error::Result;

use super::{ModelParams, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates per parameter, plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ModelParams,
    v: ModelParams,
    t: u64,
    config: AdamConfig,
}

impl AdamState {
    pub fn new(spec: &NetworkSpec) -> Result<AdamState> {
        AdamState::with_config(spec, AdamConfig::default())
    }

    pub fn with_config(spec: &NetworkSpec, config: AdamConfig) -> Result<AdamState> {
        Ok(AdamState {
            m: ModelParams::zeros_like(spec)?,
            v: ModelParams::zeros_like(spec)?,
            t: 0,
            config,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update. Increments the step counter once.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.t += 1;
        let cfg = self.config;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (idx, layer) in params.iter_mut() {
            let g = grads.layer(idx).expect("grads match params");
            let m = self.m.layer_mut(idx).expect("moments match params");
            let v = self.v.layer_mut(idx).expect("moments match params");
            update_slice(
                layer.weight.data_mut(),
                g.weight.data(),
                m.weight.data_mut(),
                v.weight.data_mut(),
                lr,
                cfg,
                (bc1, bc2),
            );
            update_slice(
                layer.bias.data_mut(),
                g.bias.data(),
                m.bias.data_mut(),
                v.bias.data_mut(),
                lr,
                cfg,
                (bc1, bc2),
            );
        }
    }
}

fn update_slice(
    w: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    cfg: AdamConfig,
    (bc1, bc2): (f64, f64),
) {
    for i in 0..w.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        w[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}
