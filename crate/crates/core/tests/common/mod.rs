//! Random small gradient-check instances shared by the gradient tests and
//! the acceptance run.
#![allow(dead_code)]

use mode_ode::model::{Head, MlpParams, DEFAULT_ARCHITECTURE};
use mode_ode::solver::{integrate, Method, SolverConfig};
use mode_ode::training::TrainSegment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INSTANCES: usize = 20;
const FD_STEP: f64 = 1e-6;
const KINK_CLEARANCE: f64 = 1e-3;

pub struct Instance {
    pub params: MlpParams,
    pub segment: TrainSegment,
    pub solver: SolverConfig,
}

/// Forward loss recomputed from scratch: integrate on the step grid and sum
/// squared residuals at the targets.
pub fn forward_loss(params: &MlpParams, segment: &TrainSegment, solver: &SolverConfig) -> f64 {
    let (grid, marks) = solver.step_grid(segment.t0, &segment.target_times).unwrap();
    let traj = integrate(params, segment.y0_scaled, &grid, Method::Euler).unwrap();
    marks
        .iter()
        .zip(&segment.target_values_scaled)
        .map(|(&k, t)| (traj.values[k] - t).powi(2))
        .sum()
}

pub fn finite_differences(inst: &Instance) -> Vec<f64> {
    let base = inst.params.to_flat();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += FD_STEP;
            minus[i] -= FD_STEP;
            let lp = forward_loss(&inst.params.from_flat(&plus).unwrap(), &inst.segment, &inst.solver);
            let lm = forward_loss(&inst.params.from_flat(&minus).unwrap(), &inst.segment, &inst.solver);
            (lp - lm) / (2.0 * FD_STEP)
        })
        .collect()
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = MlpParams::zeros(&DEFAULT_ARCHITECTURE, Head::Relu).unwrap().param_count();
    let flat: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let params = MlpParams::zeros(&DEFAULT_ARCHITECTURE, Head::Relu)
        .unwrap()
        .from_flat(&flat)
        .unwrap();
    let t0 = rng.gen_range(0.0..200.0);
    let mut times = Vec::new();
    let mut t = t0;
    for _ in 0..3 {
        t += rng.gen_range(20.0..300.0);
        times.push(t);
    }
    let segment = TrainSegment {
        t0,
        y0_scaled: rng.gen_range(0.0..1.0),
        target_times: times,
        target_values_scaled: (0..3).map(|_| rng.gen_range(0.0..1.5)).collect(),
    };
    let solver = SolverConfig {
        method: Method::Euler,
        max_step: rng.gen_range(0.5..2.0),
    };
    Instance { params, segment, solver }
}

/// Every state visited by the forward pass sits clear of every kink and the
/// head is active somewhere, so the loss is smooth and the gradient nonzero.
fn usable(inst: &Instance) -> bool {
    let (grid, _) = inst.solver.step_grid(inst.segment.t0, &inst.segment.target_times).unwrap();
    let Ok(traj) = integrate(&inst.params, inst.segment.y0_scaled, &grid, Method::Euler) else {
        return false;
    };
    let clear = traj.values.iter().all(|&y| inst.params.kink_margin(y) > KINK_CLEARANCE);
    let active = traj.values.iter().any(|&y| inst.params.rate(y).unwrap() > 0.0);
    clear && active
}

pub fn instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    for _ in 0..5000 {
        let inst = random_instance(&mut rng);
        if usable(&inst) {
            out.push(inst);
            if out.len() == INSTANCES {
                break;
            }
        }
    }
    assert_eq!(out.len(), INSTANCES, "not enough kink-free instances");
    out
}

pub fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(g, w)| (g - w).powi(2)).sum::<f64>().sqrt();
    let den: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
    num / den
}

/// Worst errors over all instances: backprop vs finite differences,
/// adjoint vs finite differences, and elementwise adjoint vs backprop.
pub fn worst_errors() -> (f64, f64, f64) {
    use mode_ode::training::{adjoint_gradient, discrete_backprop_gradient};
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for inst in instances() {
        let fd = finite_differences(&inst);
        let bp = discrete_backprop_gradient(&inst.params, &inst.segment, &inst.solver).unwrap();
        let adj = adjoint_gradient(&inst.params, &inst.segment, &inst.solver).unwrap();
        worst.0 = worst.0.max(relative_error(&bp.grad, &fd));
        worst.1 = worst.1.max(relative_error(&adj.grad, &fd));
        for (a, b) in adj.grad.iter().zip(&bp.grad) {
            if b.abs() > 1e-12 {
                worst.2 = worst.2.max((a - b).abs() / b.abs());
            }
        }
    }
    worst
}
