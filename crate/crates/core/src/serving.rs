//! Minute-by-minute replay of a serving day.
//!
//! Every minute a request arrives carrying everything observed so far: the
//! previous day and the current day up to the request minute. The MODE
//! forecaster answers from the latest observed value alone by integrating
//! the rate network on the 1-minute grid to the end of the day.

use std::time::Instant;

use crate::data::{DailySeries, POINTS_PER_DAY};
use crate::error::{Direction, ModeError, Result};
use crate::evaluation::{score_responses, EvalProtocol, EvalReport, LatencyStats};
use crate::model::MlpParams;
use crate::parallel::{map_ordered, Execution};
use crate::solver::{step, Method};

pub const LAST_MINUTE: u32 = (POINTS_PER_DAY - 1) as u32;

/// Observed history for one request. Minutes are relative to the current
/// day's midnight, so previous-day points have negative minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRequest {
    pub request_minute: u32,
    pub history: Vec<(i32, f64)>,
}

impl ForecastRequest {
    pub fn build(current: &DailySeries, previous: Option<&DailySeries>, request_minute: u32) -> Self {
        let day = POINTS_PER_DAY as i32;
        let mut history = Vec::new();
        if let Some(prev) = previous {
            history.extend(
                prev.observed_points(0..POINTS_PER_DAY)
                    .map(|(m, v)| (m as i32 - day, v)),
            );
        }
        history.extend(
            current
                .observed_points(0..request_minute as usize + 1)
                .map(|(m, v)| (m as i32, v)),
        );
        Self {
            request_minute,
            history,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.request_minute > LAST_MINUTE {
            return Err(ModeError::InsufficientHistory(format!(
                "request minute {} beyond end of day",
                self.request_minute
            )));
        }
        if self.history.is_empty() {
            return Err(ModeError::InsufficientHistory("no observed points".into()));
        }
        if self.history.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ModeError::InsufficientHistory(
                "history minutes are not strictly increasing".into(),
            ));
        }
        if self.history.iter().any(|&(m, _)| m > self.request_minute as i32) {
            return Err(ModeError::InsufficientHistory(
                "history extends past the request minute".into(),
            ));
        }
        Ok(())
    }

    /// Observed current-day points, oldest first.
    pub fn current_day(&self) -> impl DoubleEndedIterator<Item = (u32, f64)> + '_ {
        self.history
            .iter()
            .filter(|(m, _)| *m >= 0)
            .map(|&(m, v)| (m as u32, v))
    }

    pub fn previous_day(&self) -> impl DoubleEndedIterator<Item = (u32, f64)> + '_ {
        let day = POINTS_PER_DAY as i32;
        self.history
            .iter()
            .filter(|(m, _)| *m < 0)
            .map(move |&(m, v)| ((m + day) as u32, v))
    }

    pub fn latest_current_day(&self) -> Option<(u32, f64)> {
        self.current_day().next_back()
    }

    /// Minutes the response must cover.
    pub fn horizon_minutes(&self) -> std::ops::RangeInclusive<u32> {
        (self.request_minute + 1)..=LAST_MINUTE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResponse {
    pub request_minute: u32,
    pub minutes: Vec<u32>,
    pub predictions: Vec<f64>,
    pub latency_seconds: f64,
}

impl ForecastResponse {
    pub fn is_non_decreasing(&self) -> bool {
        self.predictions.windows(2).all(|w| w[1] >= w[0])
    }
}

/// A model that answers serving requests with raw-unit predictions for
/// every minute after the request through the end of the day.
pub trait Forecaster: Sync {
    fn name(&self) -> &str;

    fn predict(&self, request: &ForecastRequest) -> Result<Vec<f64>>;

    fn respond(&self, request: &ForecastRequest) -> Result<ForecastResponse> {
        let start = Instant::now();
        let predictions = self.predict(request)?;
        let latency_seconds = start.elapsed().as_secs_f64();
        let minutes: Vec<u32> = request.horizon_minutes().collect();
        if minutes.len() != predictions.len() {
            return Err(ModeError::LengthMismatch {
                left: minutes.len(),
                right: predictions.len(),
            });
        }
        Ok(ForecastResponse {
            request_minute: request.request_minute,
            minutes,
            predictions,
            latency_seconds,
        })
    }
}

/// Euler on the 1-minute grid from observed `(m0, y0_raw)`; returns raw
/// predictions for minutes `request_minute + 1 ..= 1439`.
pub fn forecast_from_point(
    params: &MlpParams,
    scale: f64,
    m0: u32,
    y0_raw: f64,
    request_minute: u32,
) -> Result<Vec<f64>> {
    if m0 > request_minute {
        return Err(ModeError::InsufficientHistory(format!(
            "initial minute {m0} after request minute {request_minute}"
        )));
    }
    let mut y = y0_raw / scale;
    let mut out = Vec::with_capacity((LAST_MINUTE - request_minute.min(LAST_MINUTE)) as usize);
    for m in m0..LAST_MINUTE {
        y = step(params, y, m as f64, 1.0, Method::Euler).map_err(|_| ModeError::NonFiniteState {
            direction: Direction::Forward,
            step: (m - m0) as usize,
        })?;
        if !y.is_finite() {
            return Err(ModeError::NonFiniteState {
                direction: Direction::Forward,
                step: (m - m0) as usize,
            });
        }
        if m + 1 > request_minute {
            out.push(y * scale);
        }
    }
    Ok(out)
}

/// Answers a request from its latest observed current-day value.
pub fn mode_forecast(params: &MlpParams, scale: f64, request: &ForecastRequest) -> Result<ForecastResponse> {
    ModeForecaster::new(params.clone(), scale).respond(request)
}

#[derive(Debug, Clone)]
pub struct ModeForecaster {
    pub params: MlpParams,
    pub scale: f64,
    name: String,
}

impl ModeForecaster {
    pub fn new(params: MlpParams, scale: f64) -> Self {
        Self {
            params,
            scale,
            name: "mode".into(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl Forecaster for ModeForecaster {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, request: &ForecastRequest) -> Result<Vec<f64>> {
        let (m0, y0) = request
            .latest_current_day()
            .ok_or_else(|| ModeError::InsufficientHistory("no observed value on the current day".into()))?;
        forecast_from_point(&self.params, self.scale, m0, y0, request.request_minute)
    }
}

#[derive(Debug, Clone)]
pub struct ServingOutcome {
    pub report: EvalReport,
    /// `(request_minute, seconds)` for every request that succeeded.
    pub latencies: Vec<(u32, f64)>,
    pub responses: Vec<ForecastResponse>,
    pub failures: Vec<(u32, String)>,
}

impl ServingOutcome {
    pub fn request_count(&self) -> usize {
        self.responses.len() + self.failures.len()
    }

    /// Number of responses containing at least one decreasing step.
    pub fn decreasing_forecasts(&self) -> usize {
        self.responses.iter().filter(|r| !r.is_non_decreasing()).count()
    }

    pub fn forecasts_csv(&self) -> String {
        let mut out = String::from("request_minute,target_minute,prediction\n");
        for r in &self.responses {
            for (m, p) in r.minutes.iter().zip(&r.predictions) {
                out.push_str(&format!("{},{m},{p:?}\n", r.request_minute));
            }
        }
        out
    }

    pub fn latency_csv(&self) -> String {
        let mut out = String::from("request_minute,seconds\n");
        for (m, s) in &self.latencies {
            out.push_str(&format!("{m},{s:?}\n"));
        }
        out
    }
}

/// Issues the 1439 requests of a serving day (minutes 1 through 1439),
/// timing each one, and scores the answers.
pub fn run_serving_day<F: Forecaster + ?Sized>(
    forecaster: &F,
    serving_day: &DailySeries,
    prev_day: &DailySeries,
    protocol: &EvalProtocol,
    execution: Execution,
) -> ServingOutcome {
    let minutes: Vec<u32> = (1..=LAST_MINUTE).collect();
    let results = map_ordered(&minutes, execution, |&r| {
        let request = ForecastRequest::build(serving_day, Some(prev_day), r);
        request.validate().and_then(|_| forecaster.respond(&request))
    });
    let mut responses = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (r, result) in minutes.iter().zip(results) {
        match result {
            Ok(resp) => responses.push(resp),
            Err(e) => failures.push((*r, e.to_string())),
        }
    }
    let latencies: Vec<(u32, f64)> = responses
        .iter()
        .map(|r| (r.request_minute, r.latency_seconds))
        .collect();
    let mut report = score_responses(forecaster.name(), serving_day, &responses, protocol);
    report.failures = failures.len();
    report.latency = LatencyStats::from_seconds(latencies.iter().map(|l| l.1).collect());
    ServingOutcome {
        report,
        latencies,
        responses,
        failures,
    }
}
