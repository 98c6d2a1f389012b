//! Fitting the rate network to observed cumulative segments.

mod adam;
mod gradient;
mod segments;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use gradient::{adjoint_gradient, discrete_backprop_gradient, segment_gradient, sse_loss, AdjointState, SegmentGradient};
pub use segments::{make_segments, TrainSegment};
pub use trainer::{train, validation_mape, EpochRecord, TrainOutcome, VALIDATION_HORIZON, VALIDATION_REQUEST_MINUTE};

use serde::{Deserialize, Serialize};

use crate::error::{ModeError, Result};
use crate::model::{Head, DEFAULT_ARCHITECTURE};
use crate::parallel::Execution;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Backward integration of the augmented state/adjoint/parameter system.
    #[default]
    Adjoint,
    /// Reverse-mode differentiation of the stored Euler recursion.
    DiscreteBackprop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Stride, in minutes, of the training observation grid.
    pub downsample_rate: usize,
    /// Minutes of targets following each segment's initial point.
    pub segment_length: usize,
    pub epochs: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub architecture: Vec<usize>,
    pub head: Head,
    pub solver: SolverConfig,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 10,
            downsample_rate: 10,
            segment_length: 120,
            epochs: 200,
            seed: 0,
            gradient_mode: GradientMode::Adjoint,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            architecture: DEFAULT_ARCHITECTURE.to_vec(),
            head: Head::Relu,
            solver: SolverConfig::default(),
            execution: Execution::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModeError::config("train.learning_rate", "must be positive"));
        }
        if self.batch_size < 1 {
            return Err(ModeError::config("train.batch_size", "must be at least 1"));
        }
        if self.downsample_rate < 1 {
            return Err(ModeError::config("train.downsample_rate", "must be at least 1"));
        }
        if self.segment_length < self.downsample_rate {
            return Err(ModeError::config(
                "train.segment_length",
                "must be at least downsample_rate",
            ));
        }
        if self.epochs < 1 {
            return Err(ModeError::config("train.epochs", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return Err(ModeError::config("train.adam_beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(ModeError::config("train.adam_beta2", "must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(ModeError::config("train.adam_eps", "must be positive"));
        }
        self.solver
            .validate()
            .map_err(|_| ModeError::config("train.solver.max_step", "must be positive"))?;
        Ok(())
    }
}
