//! Adam optimizer with bias correction.

use super::tensor::{Gradients, Params, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First and second moment estimates, aligned with the parameter order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &Params) -> AdamState {
        AdamState {
            t: 0,
            m: params.iter().map(|p| Tensor::zeros(p.tensor.shape.clone())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.tensor.shape.clone())).collect(),
        }
    }
}

/// One update: `theta -= lr * m_hat / (sqrt(v_hat) + eps)` with
/// `m_hat = m/(1-b1^t)`, `v_hat = v/(1-b2^t)`. Non-trainable parameters
/// (batch-norm running stats) are skipped.
pub fn adam_step(params: &mut Params, grads: &Gradients, state: &mut AdamState, lr: f64) {
    state.t += 1;
    let bc1 = 1.0 - BETA1.powi(state.t as i32);
    let bc2 = 1.0 - BETA2.powi(state.t as i32);
    for idx in 0..params.len() {
        if !params.at(idx).trainable {
            continue;
        }
        let g = grads.at(idx);
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        let theta = &mut params.at_mut(idx).tensor;
        for j in 0..theta.data.len() {
            let gj = g.data[j];
            m.data[j] = BETA1 * m.data[j] + (1.0 - BETA1) * gj;
            v.data[j] = BETA2 * v.data[j] + (1.0 - BETA2) * gj * gj;
            let m_hat = m.data[j] / bc1;
            let v_hat = v.data[j] / bc2;
            theta.data[j] -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}
