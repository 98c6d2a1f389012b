//! Monotone neural ODE forecasting for cumulative daily time series.
//!
//! A small ReLU-headed network models the growth rate `dy/dt = f(y)` of a
//! cumulative series; forecasts come from integrating it forward from the
//! latest observation, so they can never decrease. Training uses the
//! adjoint method on down-sampled segments and simply skips missing points.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod model;
pub mod parallel;
pub mod serving;
pub mod solver;
pub mod training;

pub use error::{ModeError, Result};
