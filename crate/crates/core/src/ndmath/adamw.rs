//! AdamW with decoupled weight decay and bias correction.
//!
//! ```text
//! θ ← θ·(1 − lr·λ)
//! m ← β₁m + (1 − β₁)g
//! v ← β₂v + (1 − β₂)g²
//! θ ← θ − lr · m̂ / (√v̂ + ε),   m̂ = m/(1 − β₁ᵗ), v̂ = v/(1 − β₂ᵗ)
//! ```

use super::{MathError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 8e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.001,
        }
    }
}

/// Per-parameter optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    pub m: Tensor,
    pub v: Tensor,
    pub config: AdamWConfig,
}

impl AdamWState {
    pub fn new(shape: &[usize], config: AdamWConfig) -> Self {
        Self {
            step: 0,
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            config,
        }
    }
}

pub fn adamw_step(param: &mut Tensor, grad: &Tensor, state: &mut AdamWState) -> Result<(), MathError> {
    if param.shape() != grad.shape() || state.m.shape() != param.shape() {
        return Err(MathError::Shape {
            op: "adamw_step",
            lhs: param.shape().to_vec(),
            rhs: grad.shape().to_vec(),
        });
    }
    if let Some(i) = grad.data().iter().position(|g| !g.is_finite()) {
        return Err(MathError::NonFinite(format!(
            "adamw_step: gradient coordinate {i} is {}",
            grad.data()[i]
        )));
    }
    let c = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let decay = 1.0 - c.lr * c.weight_decay;
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for (i, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
        *p *= decay;
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
    Ok(())
}
