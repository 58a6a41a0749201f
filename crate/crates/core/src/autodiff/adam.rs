//! Adam with bias correction.

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::params::{GradMap, ParamStore};
use super::tape::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub lr: f64,
    /// Number of completed updates.
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, p)| Tensor::zeros(p.dim())).collect();
        Self { config, lr, t: 0, m: zeros(), v: zeros() }
    }

    pub fn first_moment(&self, id: usize) -> &Tensor {
        &self.m[id]
    }

    pub fn second_moment(&self, id: usize) -> &Tensor {
        &self.v[id]
    }
}

/// One Adam update in place. A non-finite gradient leaves both `params` and
/// `state` untouched.
pub fn adam_step(params: &mut ParamStore, grads: &GradMap, state: &mut AdamState) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            reason: format!("non-finite gradient at Adam step {}", state.t + 1),
            last_good: None,
        });
    }
    state.t += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let lr = state.lr;
    for (id, p) in params.values_mut().iter_mut().enumerate() {
        Zip::from(p)
            .and(&mut state.m[id])
            .and(&mut state.v[id])
            .and(grads.get(id))
            .for_each(|p, m, v, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}
