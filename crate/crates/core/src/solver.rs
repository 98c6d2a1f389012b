//! Explicit one-step solvers for the autonomous IVP `dy/dt = f(y)`.
//!
//! Grids may be irregular; each step uses the actual gap between consecutive
//! time points, so missing observations only lengthen a step. Euler with a
//! non-negative rate is exactly non-decreasing. RK4 carries no such
//! guarantee and is kept out of serving paths.

use serde::{Deserialize, Serialize};

use crate::error::{Direction, ModeError, Result};
use crate::model::{model_time, MlpParams};

pub const MINUTES_PER_DAY: f64 = 1440.0;

/// Anything that can act as the right-hand side of the ODE, as a rate per minute.
pub trait RateField {
    fn rate(&self, y: f64) -> Result<f64>;
}

/// The network's per-day output converted to a per-minute rate.
impl RateField for MlpParams {
    fn rate(&self, y: f64) -> Result<f64> {
        Ok(model_time(MlpParams::rate(self, y)?))
    }
}

impl<F: Fn(f64) -> f64> RateField for F {
    fn rate(&self, y: f64) -> Result<f64> {
        Ok(self(y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
}

/// Strictly increasing time points, in minutes since midnight.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(ModeError::InvalidGrid("grid is empty".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            if !(0.0..=MINUTES_PER_DAY).contains(&t) {
                return Err(ModeError::InvalidGrid(format!(
                    "time {t} at index {i} outside [0, 1440]"
                )));
            }
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(ModeError::InvalidGrid(format!(
                "not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self(times))
    }

    /// `start, start + 1, ..., end` in whole minutes.
    pub fn minutes(start: u32, end: u32) -> Result<Self> {
        Self::new((start..=end).map(f64::from).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: TimeGrid,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn new(times: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(ModeError::LengthMismatch {
                left: times.len(),
                right: values.len(),
            });
        }
        Ok(Self { times, values })
    }

    pub fn last_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Integration method plus the step-grid policy.
///
/// The step grid is the union of the requested output times and an equal
/// subdivision of every gap so that no step exceeds `max_step` minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub max_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Euler,
            max_step: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return Err(ModeError::config("solver.max_step", "must be a positive finite number"));
        }
        Ok(())
    }

    /// Step grid from `t0` through every output time. Returns the grid and,
    /// for each output time, its index in the grid.
    pub fn step_grid(&self, t0: f64, outputs: &[f64]) -> Result<(TimeGrid, Vec<usize>)> {
        self.validate()?;
        let mut times = vec![t0];
        let mut marks = Vec::with_capacity(outputs.len());
        let mut prev = t0;
        for &t in outputs {
            if t <= prev {
                return Err(ModeError::InvalidGrid(format!(
                    "output time {t} does not follow {prev}"
                )));
            }
            let n = ((t - prev) / self.max_step).ceil().max(1.0) as usize;
            let span = t - prev;
            for k in 1..n {
                times.push(prev + span * (k as f64) / (n as f64));
            }
            times.push(t);
            marks.push(times.len() - 1);
            prev = t;
        }
        Ok((TimeGrid::new(times)?, marks))
    }
}

/// One step of size `dt` from `y`. The time argument is unused: the system is autonomous.
pub fn step<F: RateField + ?Sized>(field: &F, y: f64, _t: f64, dt: f64, method: Method) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(ModeError::NonPositiveStep(dt));
    }
    if !y.is_finite() {
        return Err(ModeError::NonFiniteInput(y));
    }
    match method {
        Method::Euler => Ok(y + dt * field.rate(y)?),
        Method::Rk4 => {
            let k1 = field.rate(y)?;
            let k2 = field.rate(y + 0.5 * dt * k1)?;
            let k3 = field.rate(y + 0.5 * dt * k2)?;
            let k4 = field.rate(y + dt * k3)?;
            Ok(y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        }
    }
}

/// Integrates from `(grid[0], y0)` across every point of `grid`.
pub fn integrate<F: RateField + ?Sized>(
    field: &F,
    y0: f64,
    grid: &TimeGrid,
    method: Method,
) -> Result<Trajectory> {
    if !y0.is_finite() {
        return Err(ModeError::NonFiniteInput(y0));
    }
    let times = grid.times();
    let mut values = Vec::with_capacity(times.len());
    values.push(y0);
    let mut y = y0;
    for (i, w) in times.windows(2).enumerate() {
        y = step(field, y, w[0], w[1] - w[0], method).map_err(|e| match e {
            ModeError::NonFiniteInput(_) => ModeError::NonFiniteState {
                direction: Direction::Forward,
                step: i,
            },
            other => other,
        })?;
        if !y.is_finite() {
            return Err(ModeError::NonFiniteState {
                direction: Direction::Forward,
                step: i,
            });
        }
        values.push(y);
    }
    Trajectory::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Head, DEFAULT_ARCHITECTURE};

    fn regular(n: usize, dt: f64) -> TimeGrid {
        TimeGrid::new((0..=n).map(|i| i as f64 * dt).collect()).unwrap()
    }

    #[test]
    fn constant_rate_euler_is_exact() {
        let c = 0.25;
        let traj = integrate(&|_y: f64| c, 3.0, &regular(8, 0.5), Method::Euler).unwrap();
        assert_eq!(traj.last_value(), 3.0 + 8.0 * c * 0.5);
    }

    #[test]
    fn zero_dynamics_stay_put() {
        let zero = MlpParams::zeros(&DEFAULT_ARCHITECTURE, Head::Relu).unwrap();
        for method in [Method::Euler, Method::Rk4] {
            let traj = integrate(&zero, 0.4, &regular(10, 1.0), method).unwrap();
            assert!(traj.values.iter().all(|&v| v == 0.4));
        }
    }

    #[test]
    fn euler_exponential() {
        let traj = integrate(&|y: f64| y, 1.0, &regular(1000, 1e-3), Method::Euler).unwrap();
        let e = std::f64::consts::E;
        assert!((traj.last_value() - e).abs() / e < 2e-3);
    }

    #[test]
    fn single_steps() {
        assert_eq!(step(&|_y: f64| 0.0, 1.5, 0.0, 1.0, Method::Euler).unwrap(), 1.5);
        assert_eq!(step(&|_y: f64| 0.5, 1.0, 0.0, 2.0, Method::Euler).unwrap(), 2.0);
        let rk = step(&|y: f64| y, 1.0, 0.0, 0.1, Method::Rk4).unwrap();
        assert!((rk - 1.10517).abs() < 1e-4);
        assert!(matches!(
            step(&|y: f64| y, 1.0, 0.0, 0.0, Method::Euler),
            Err(ModeError::NonPositiveStep(_))
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.0]).is_err());
        assert!(TimeGrid::new(vec![5.0, 3.0]).is_err());
        assert!(TimeGrid::new(vec![-1.0]).is_err());
        assert!(TimeGrid::new(vec![1441.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1440.0]).is_ok());
    }

    #[test]
    fn blow_up_reports_step() {
        let grid = regular(1400, 1.0);
        let err = integrate(&|y: f64| y * y, 1.0, &grid, Method::Euler).unwrap_err();
        assert!(matches!(
            err,
            ModeError::NonFiniteState {
                direction: Direction::Forward,
                ..
            }
        ));
    }

    #[test]
    fn step_grid_subdivides_gaps() {
        let cfg = SolverConfig {
            method: Method::Euler,
            max_step: 1.0,
        };
        let (grid, marks) = cfg.step_grid(10.0, &[13.0, 14.0, 20.0]).unwrap();
        let expected: Vec<f64> = (10..=20).map(f64::from).collect();
        assert_eq!(grid.times(), expected.as_slice());
        assert_eq!(marks, vec![3, 4, 10]);
        assert!(cfg.step_grid(10.0, &[10.0]).is_err());
    }

    #[test]
    fn euler_converges_at_first_order() {
        let f = |y: f64| (y.sin() + 1.5) * 0.5;
        let reference = integrate(&f, 0.2, &regular(20_000, 1e-4), Method::Rk4)
            .unwrap()
            .last_value();
        let err = |n: usize| {
            (integrate(&f, 0.2, &regular(n, 2.0 / n as f64), Method::Euler)
                .unwrap()
                .last_value()
                - reference)
                .abs()
        };
        for n in [50, 100, 200] {
            let ratio = err(n) / err(2 * n);
            assert!((1.0..=4.0).contains(&ratio), "ratio {ratio} at n={n}");
        }
    }

    #[test]
    fn superset_grid_agrees_for_constant_rate() {
        let f = |_y: f64| 0.3;
        let coarse = TimeGrid::new(vec![0.0, 2.0, 5.0, 9.0]).unwrap();
        let fine = TimeGrid::new(vec![0.0, 1.0, 2.0, 3.5, 5.0, 6.0, 7.5, 9.0]).unwrap();
        let a = integrate(&f, 1.0, &coarse, Method::Euler).unwrap();
        let b = integrate(&f, 1.0, &fine, Method::Euler).unwrap();
        for (i, &t) in coarse.times().iter().enumerate() {
            let j = fine.times().iter().position(|&s| s == t).unwrap();
            assert!((a.values[i] - b.values[j]).abs() < 1e-12);
        }
    }
}
