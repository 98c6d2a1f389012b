use crate::error::{ModeError, Result};
use crate::model::MlpParams;

use super::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step_count: 0,
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(
    params: &MlpParams,
    grad: &[f64],
    state: &AdamState,
    config: &TrainConfig,
) -> Result<(MlpParams, AdamState)> {
    let n = params.param_count();
    for len in [grad.len(), state.first_moment.len(), state.second_moment.len()] {
        if len != n {
            return Err(ModeError::ShapeMismatch { expected: n, got: len });
        }
    }
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let t = state.step_count + 1;
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);

    let mut theta = params.to_flat();
    let mut next = AdamState {
        first_moment: Vec::with_capacity(n),
        second_moment: Vec::with_capacity(n),
        step_count: t,
    };
    for i in 0..n {
        let m = b1 * state.first_moment[i] + (1.0 - b1) * grad[i];
        let v = b2 * state.second_moment[i] + (1.0 - b2) * grad[i] * grad[i];
        let m_hat = m / c1;
        let v_hat = v / c2;
        theta[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
        next.first_moment.push(m);
        next.second_moment.push(v);
    }
    Ok((params.from_flat(&theta)?, next))
}
