use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ModeError, Result};
use crate::evaluation::mape_observed;
use crate::model::MlpParams;
use crate::parallel::map_ordered;
use crate::serving::forecast_from_point;

use super::{adam_step, make_segments, segment_gradient, AdamState, TrainConfig};

/// Model selection scores a single 2-hour forecast issued at 14:00.
pub const VALIDATION_REQUEST_MINUTE: u32 = 840;
pub const VALIDATION_HORIZON: u32 = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MAPE.
    pub params: MlpParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_mape\n");
        for r in &self.history {
            out.push_str(&format!("{},{:?},{:?}\n", r.epoch, r.train_loss, r.val_mape));
        }
        out
    }
}

/// Mean over validation days of the 2H MAPE for a request at 14:00.
///
/// Returns infinity when no day yields a scorable forecast so such epochs
/// are never selected.
pub fn validation_mape(params: &MlpParams, val: &Dataset) -> f64 {
    let r = VALIDATION_REQUEST_MINUTE as usize;
    let mut scores = Vec::new();
    for day in val.days() {
        let Some((m0, y0)) = (0..=r).rev().find_map(|m| day.observed(m).map(|v| (m, v))) else {
            continue;
        };
        let Ok(pred) = forecast_from_point(params, val.scale(), m0 as u32, y0, VALIDATION_REQUEST_MINUTE) else {
            continue;
        };
        let window = (r + 1)..=(r + VALIDATION_HORIZON as usize);
        let (actual, predicted): (Vec<Option<f64>>, Vec<f64>) = window
            .map(|m| (day.observed(m), pred[m - r - 1]))
            .unzip();
        if let Some(score) = mape_observed(&actual, &predicted).filter(|s| s.is_finite()) {
            scores.push(score);
        }
    }
    if scores.is_empty() {
        f64::INFINITY
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// Mini-batch Adam over shuffled segments; returns the best-validation parameters.
///
/// Per-segment gradients of a batch may be computed in parallel; they are
/// reduced in batch order, so results do not depend on the execution mode.
pub fn train(dataset: &Dataset, val_dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(ModeError::EmptyInput("training dataset"));
    }
    if val_dataset.is_empty() {
        return Err(ModeError::EmptyInput("validation dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MlpParams::init(config.seed, &config.architecture, config.head)?;
    let mut segments = make_segments(dataset, config, &mut rng);
    if segments.is_empty() {
        return Err(ModeError::NoSegments(format!(
            "no observed initial value has an observed target within {} minutes on the {}-minute grid; \
             the training days are too sparse after dropping missing values",
            config.segment_length, config.downsample_rate
        )));
    }

    let mut state = AdamState::new(params.param_count());
    let mut history = Vec::with_capacity(config.epochs);
    let mut best = (f64::INFINITY, 0usize, params.clone());

    for epoch in 1..=config.epochs {
        segments.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in segments.chunks(config.batch_size) {
            let results = map_ordered(batch, config.execution, |seg| {
                segment_gradient(config.gradient_mode, &params, seg, &config.solver)
            });
            let mut grad = vec![0.0; params.param_count()];
            for r in results {
                let r = r?;
                loss_sum += r.loss;
                for (g, v) in grad.iter_mut().zip(&r.grad) {
                    *g += v;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            let (next, next_state) = adam_step(&params, &grad, &state, config)?;
            params = next;
            state = next_state;
        }
        let train_loss = loss_sum / segments.len() as f64;
        let val_mape = validation_mape(&params, val_dataset);
        if val_mape < best.0 {
            best = (val_mape, epoch, params.clone());
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_mape,
        });
    }

    let (_, best_epoch, best_params) = if best.0.is_finite() {
        best
    } else {
        (f64::INFINITY, config.epochs, params)
    };
    Ok(TrainOutcome {
        params: best_params,
        best_epoch,
        history,
    })
}
