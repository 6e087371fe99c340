use serde::{Deserialize, Serialize};

use super::{Scalar, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<T>,
    second_moment: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        AdamState { config, step_count: 0, first_moment: vec![T::zero(); len], second_moment: vec![T::zero(); len] }
    }

    /// Restores saved state. Fails if the moment buffers disagree in length
    /// or the second moment holds a negative or non-finite value.
    pub fn from_parts(
        config: AdamConfig,
        step_count: u64,
        first_moment: Vec<T>,
        second_moment: Vec<T>,
    ) -> Result<Self, TensorError> {
        if first_moment.len() != second_moment.len() {
            return Err(TensorError::shape(
                "adam_state",
                format!("moment lengths {} and {}", first_moment.len(), second_moment.len()),
            ));
        }
        if second_moment.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(TensorError::Invalid {
                op: "adam_state",
                detail: "second moment must be finite and non-negative".into(),
            });
        }
        Ok(AdamState { config, step_count, first_moment, second_moment })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[T] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[T] {
        &self.second_moment
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Gradients are checked before anything is written, so a failed step leaves
/// both the parameters and the state untouched.
pub fn adam_step<T: Scalar>(
    name: &str,
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
) -> Result<(), TensorError> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(TensorError::shape(
            "adam_step",
            format!("{name}: {} params, {} grads, state for {}", params.len(), grads.len(), state.len()),
        ));
    }
    if let Some(at) = grads.iter().position(|g| !g.is_finite()) {
        return Err(TensorError::NonFinite { op: "adam_step", what: format!("gradient of {name}[{at}]") });
    }
    let cfg = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let correction1 = T::of_f64(1.0 - cfg.beta1.powi(t));
    let correction2 = T::of_f64(1.0 - cfg.beta2.powi(t));
    let (b1, b2) = (T::of_f64(cfg.beta1), T::of_f64(cfg.beta2));
    let (lr, eps) = (T::of_f64(cfg.learning_rate), T::of_f64(cfg.epsilon));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    for (((p, &g), m), v) in
        params.iter_mut().zip(grads).zip(state.first_moment.iter_mut()).zip(state.second_moment.iter_mut())
    {
        *m = b1 * *m + one_b1 * g;
        *v = b2 * *v + one_b2 * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
