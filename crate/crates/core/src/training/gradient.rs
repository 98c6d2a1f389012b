//! Loss and parameter gradients for one training segment.
//!
//! Two routes compute the same quantity:
//!
//! * [`adjoint_gradient`] keeps only the predictions at observation times.
//!   It integrates the augmented system `[y, a, dL/dtheta]` backward on the
//!   forward step grid reversed, reconstructing the state as it goes and
//!   adding the jump `2 (pred - target)` to the adjoint at each observation.
//! * [`discrete_backprop_gradient`] stores the whole Euler trajectory and
//!   differentiates the recursion exactly. It serves as the oracle.
//!
//! On a shared grid the two differ only by the state reconstruction error
//! of the backward sweep, which is second order in the step size.

use crate::error::{Direction, ModeError, Result};
use crate::model::{model_time, MlpParams};
use crate::solver::{integrate, Method, SolverConfig, Trajectory};

use super::{GradientMode, TrainSegment};

/// Sum of squared residuals over matching time grids.
pub fn sse_loss(pred: &Trajectory, target: &Trajectory) -> Result<f64> {
    if pred.times != target.times {
        return Err(ModeError::GridMismatch);
    }
    Ok(pred
        .values
        .iter()
        .zip(&target.values)
        .map(|(p, t)| (p - t) * (p - t))
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// State carried by the backward sweep of the adjoint method.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub y: f64,
    /// dL/dy at the current backward time.
    pub a: f64,
    pub grad_theta_accum: Vec<f64>,
}

fn require_euler(solver: &SolverConfig) -> Result<()> {
    if solver.method != Method::Euler {
        return Err(ModeError::Unsupported(
            "gradients are defined for the Euler step grid only".into(),
        ));
    }
    Ok(())
}

fn backward_failure(step: usize) -> ModeError {
    ModeError::NonFiniteState {
        direction: Direction::Backward,
        step,
    }
}

pub fn adjoint_gradient(
    params: &MlpParams,
    segment: &TrainSegment,
    solver: &SolverConfig,
) -> Result<SegmentGradient> {
    require_euler(solver)?;
    let n_params = params.param_count();
    if segment.is_empty() {
        return Ok(SegmentGradient {
            loss: 0.0,
            grad: vec![0.0; n_params],
        });
    }
    let (grid, marks) = solver.step_grid(segment.t0, &segment.target_times)?;
    let times = grid.times();

    // Forward: keep predictions at the observation marks only.
    let mut predictions = Vec::with_capacity(marks.len());
    let mut y = segment.y0_scaled;
    let mut next_mark = 0;
    for k in 1..times.len() {
        let h = model_time(times[k] - times[k - 1]);
        y += h * params.rate(y).map_err(|_| ModeError::NonFiniteState {
            direction: Direction::Forward,
            step: k - 1,
        })?;
        if !y.is_finite() {
            return Err(ModeError::NonFiniteState {
                direction: Direction::Forward,
                step: k - 1,
            });
        }
        if next_mark < marks.len() && marks[next_mark] == k {
            predictions.push(y);
            next_mark += 1;
        }
    }

    let loss = predictions
        .iter()
        .zip(&segment.target_values_scaled)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();

    // Backward from the last observation toward t0.
    let mut state = AdjointState {
        y: predictions[predictions.len() - 1],
        a: 0.0,
        grad_theta_accum: vec![0.0; n_params],
    };
    let mut mark = marks.len();
    for k in (1..times.len()).rev() {
        if mark > 0 && marks[mark - 1] == k {
            mark -= 1;
            state.y = predictions[mark];
            state.a += 2.0 * (predictions[mark] - segment.target_values_scaled[mark]);
        }
        let h = model_time(times[k] - times[k - 1]);
        // State first, then adjoint and accumulator at the reconstructed state.
        let f = params.rate(state.y).map_err(|_| backward_failure(k))?;
        state.y -= h * f;
        let a_old = state.a;
        let (_, f_y) = params
            .rate_vjp(state.y, h * a_old, &mut state.grad_theta_accum)
            .map_err(|_| backward_failure(k))?;
        state.a = a_old + h * f_y * a_old;
        if !(state.y.is_finite() && state.a.is_finite()) {
            return Err(backward_failure(k));
        }
    }
    if state.grad_theta_accum.iter().any(|g| !g.is_finite()) {
        return Err(backward_failure(0));
    }
    Ok(SegmentGradient {
        loss,
        grad: state.grad_theta_accum,
    })
}

pub fn discrete_backprop_gradient(
    params: &MlpParams,
    segment: &TrainSegment,
    solver: &SolverConfig,
) -> Result<SegmentGradient> {
    require_euler(solver)?;
    let n_params = params.param_count();
    if segment.is_empty() {
        return Ok(SegmentGradient {
            loss: 0.0,
            grad: vec![0.0; n_params],
        });
    }
    let (grid, marks) = solver.step_grid(segment.t0, &segment.target_times)?;
    let traj = integrate(params, segment.y0_scaled, &grid, Method::Euler)?;
    let times = grid.times();
    let ys = &traj.values;

    let mut residual = vec![0.0; times.len()];
    let mut loss = 0.0;
    for (&k, &target) in marks.iter().zip(&segment.target_values_scaled) {
        let r = ys[k] - target;
        residual[k] = r;
        loss += r * r;
    }

    let mut grad = vec![0.0; n_params];
    let mut a = 0.0;
    for k in (1..times.len()).rev() {
        a += 2.0 * residual[k];
        let h = model_time(times[k] - times[k - 1]);
        let (_, f_y) = params
            .rate_vjp(ys[k - 1], h * a, &mut grad)
            .map_err(|_| backward_failure(k))?;
        a += h * f_y * a;
        if !a.is_finite() {
            return Err(backward_failure(k));
        }
    }
    Ok(SegmentGradient { loss, grad })
}

pub fn segment_gradient(
    mode: GradientMode,
    params: &MlpParams,
    segment: &TrainSegment,
    solver: &SolverConfig,
) -> Result<SegmentGradient> {
    match mode {
        GradientMode::Adjoint => adjoint_gradient(params, segment, solver),
        GradientMode::DiscreteBackprop => discrete_backprop_gradient(params, segment, solver),
    }
}
