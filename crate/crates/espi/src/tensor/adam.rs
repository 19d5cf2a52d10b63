//! Bias-corrected Adam over a named parameter set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ParamSet;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first_moment: BTreeMap<String, Vec<f64>>,
    second_moment: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
        }
    }
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState::new(0.001)
    }
}

/// Apply one Adam update using each parameter's accumulated gradient, then
/// clear the gradients. Parameters without a gradient are left untouched.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (name, tensor) in params.iter_mut() {
        if !tensor.requires_grad {
            continue;
        }
        let Some(grad) = tensor.grad.take() else {
            continue;
        };
        let m = state
            .first_moment
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; grad.len()]);
        let v = state
            .second_moment
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; grad.len()]);
        for i in 0..grad.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            tensor.data[i] -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
}
