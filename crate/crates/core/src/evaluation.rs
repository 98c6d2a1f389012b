//! Forecast accuracy: per-request MAPE, the interval/horizon protocol and two
//! simple reference forecasters.

use serde::{Deserialize, Serialize};

use crate::data::DailySeries;
use crate::error::{ModeError, Result};
use crate::parallel::{map_ordered, Execution};
use crate::serving::{ForecastRequest, ForecastResponse, Forecaster, LAST_MINUTE};

/// Mean absolute percentage error over the points whose actual value is non-zero.
///
/// Returns 0 when every actual is zero.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(ModeError::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(ModeError::EmptyInput("mape inputs"));
    }
    let terms = MapeTerms::collect(actual.iter().map(|&a| Some(a)), predicted.iter().copied());
    Ok(terms.value().unwrap_or(0.0))
}

/// MAPE where `None` marks a missing actual. `None` if nothing is scorable.
pub fn mape_observed(actual: &[Option<f64>], predicted: &[f64]) -> Option<f64> {
    MapeTerms::collect(actual.iter().copied(), predicted.iter().copied()).value()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct MapeTerms {
    sum: f64,
    used: usize,
    skipped: usize,
}

impl MapeTerms {
    fn collect(actual: impl Iterator<Item = Option<f64>>, predicted: impl Iterator<Item = f64>) -> Self {
        let mut t = Self::default();
        for (a, p) in actual.zip(predicted) {
            match a {
                Some(a) if a != 0.0 => {
                    t.sum += ((a - p) / a).abs();
                    t.used += 1;
                }
                _ => t.skipped += 1,
            }
        }
        t
    }

    fn value(&self) -> Option<f64> {
        (self.used > 0).then(|| self.sum / self.used as f64)
    }
}

/// Half-open range of request minutes `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub name: String,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalProtocol {
    pub intervals: Vec<Interval>,
    /// Forecast horizons in minutes.
    pub horizons: Vec<u32>,
    /// Minute by which a third-interval 2-hour forecast window must end (22:00).
    pub interval3_2h_cap: u32,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        let iv = |name: &str, start, end| Interval {
            name: name.into(),
            start,
            end,
        };
        Self {
            intervals: vec![
                iv("Interval1", 420, 840),
                iv("Interval2", 840, 1200),
                iv("Interval3", 1200, 1440),
            ],
            horizons: vec![120, 240],
            interval3_2h_cap: 1320,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        for (i, iv) in self.intervals.iter().enumerate() {
            if iv.start >= iv.end || iv.end > 1440 {
                return Err(ModeError::config(
                    format!("protocol.intervals[{i}]"),
                    format!("[{}, {}) is not a non-empty range within the day", iv.start, iv.end),
                ));
            }
        }
        let mut sorted: Vec<&Interval> = self.intervals.iter().collect();
        sorted.sort_by_key(|iv| iv.start);
        if sorted.windows(2).any(|w| w[1].start < w[0].end) {
            return Err(ModeError::config("protocol.intervals", "intervals overlap"));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(ModeError::config("protocol.horizons", "need at least one positive horizon"));
        }
        Ok(())
    }

    /// Request minutes scored for `(interval index, horizon)`.
    ///
    /// A request counts only when its whole horizon lies within the day,
    /// which is why the last interval has no 4-hour cell.
    pub fn request_minutes(&self, interval: usize, horizon: u32) -> std::ops::Range<u32> {
        let iv = &self.intervals[interval];
        let mut end = iv.end.min(LAST_MINUTE.saturating_sub(horizon) + 1);
        if interval == 2 && horizon == 120 {
            end = end.min((self.interval3_2h_cap + 1).saturating_sub(horizon));
        }
        iv.start..end.max(iv.start)
    }

    pub fn cells(&self) -> Vec<(usize, u32)> {
        let mut cells = Vec::new();
        for i in 0..self.intervals.len() {
            for &h in &self.horizons {
                if !self.request_minutes(i, h).is_empty() {
                    cells.push((i, h));
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub interval: String,
    pub horizon: u32,
    pub mean_mape: f64,
    /// Sample standard deviation across requests.
    pub std_mape: f64,
    pub n_requests: usize,
    /// Horizon points left out because the actual was missing or zero.
    pub n_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_seconds: f64,
    pub p50_seconds: f64,
    pub p99_seconds: f64,
    pub max_seconds: f64,
}

impl LatencyStats {
    pub fn from_seconds(mut seconds: Vec<f64>) -> Option<Self> {
        if seconds.is_empty() {
            return None;
        }
        seconds.sort_by(f64::total_cmp);
        let n = seconds.len();
        let rank = |q: f64| seconds[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        Some(Self {
            count: n,
            mean_seconds: seconds.iter().sum::<f64>() / n as f64,
            p50_seconds: rank(0.50),
            p99_seconds: rank(0.99),
            max_seconds: seconds[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub cells: Vec<CellReport>,
    pub failures: usize,
    pub latency: Option<LatencyStats>,
}

impl EvalReport {
    pub fn cell(&self, interval: &str, horizon: u32) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.interval == interval && c.horizon == horizon)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("interval,horizon,mean_mape,std_mape,n_requests,n_skipped\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{:?},{:?},{},{}\n",
                c.interval, c.horizon, c.mean_mape, c.std_mape, c.n_requests, c.n_skipped
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Scores responses against the day's observed values.
///
/// Requests without a response (failures) or without any scorable point are
/// left out of the per-cell mean.
pub fn score_responses(
    model: &str,
    day: &DailySeries,
    responses: &[ForecastResponse],
    protocol: &EvalProtocol,
) -> EvalReport {
    let mut by_minute: Vec<Option<&ForecastResponse>> = vec![None; LAST_MINUTE as usize + 1];
    for r in responses {
        if let Some(slot) = by_minute.get_mut(r.request_minute as usize) {
            *slot = Some(r);
        }
    }
    let cells = protocol
        .cells()
        .into_iter()
        .map(|(i, h)| {
            let mut scores = Vec::new();
            let mut n_skipped = 0;
            for r in protocol.request_minutes(i, h) {
                let Some(resp) = by_minute[r as usize] else { continue };
                let take = (h as usize).min(resp.predictions.len());
                let actual = (r as usize + 1..r as usize + 1 + take).map(|m| day.observed(m));
                let terms = MapeTerms::collect(actual, resp.predictions[..take].iter().copied());
                n_skipped += terms.skipped;
                if let Some(v) = terms.value() {
                    scores.push(v);
                }
            }
            let (mean, std) = mean_std(&scores);
            CellReport {
                interval: protocol.intervals[i].name.clone(),
                horizon: h,
                mean_mape: mean,
                std_mape: std,
                n_requests: scores.len(),
                n_skipped,
            }
        })
        .collect();
    EvalReport {
        model: model.to_string(),
        cells,
        failures: 0,
        latency: None,
    }
}

/// Requests a forecast at every scored minute of `day`, using only the
/// day's own prefix as history, and aggregates MAPE per cell.
pub fn evaluate_day<F: Forecaster + ?Sized>(
    forecaster: &F,
    day: &DailySeries,
    protocol: &EvalProtocol,
    execution: Execution,
) -> Result<EvalReport> {
    let mut minutes: Vec<u32> = protocol
        .cells()
        .into_iter()
        .flat_map(|(i, h)| protocol.request_minutes(i, h))
        .collect();
    minutes.sort_unstable();
    minutes.dedup();
    let results = map_ordered(&minutes, execution, |&r| {
        let request = ForecastRequest::build(day, None, r);
        forecaster.respond(&request).map_err(|e| ModeError::Forecast {
            minute: r,
            source: Box::new(e),
        })
    });
    let responses = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(score_responses(forecaster.name(), day, &responses, protocol))
}

/// Repeats the last observed current-day value.
#[derive(Debug, Clone, Default)]
pub struct Persistence;

impl Forecaster for Persistence {
    fn name(&self) -> &str {
        "persistence"
    }

    fn predict(&self, request: &ForecastRequest) -> Result<Vec<f64>> {
        let (_, last) = request
            .latest_current_day()
            .ok_or(ModeError::EmptyInput("current-day history"))?;
        Ok(vec![last; request.horizon_minutes().count()])
    }
}

/// Extrapolates the average growth over a trailing window, clamped at zero.
///
/// The rate is `(y_last - y_first) / (t_last - t_first)` over the observed
/// current-day points in the window. With fewer than two such points it
/// uses the two latest current-day points, then the previous day's points
/// over the same clock window.
#[derive(Debug, Clone)]
pub struct LinearRate {
    pub window: u32,
}

impl Default for LinearRate {
    fn default() -> Self {
        Self { window: 60 }
    }
}

impl LinearRate {
    fn rate(points: &[(u32, f64)]) -> f64 {
        let (t0, y0) = points[0];
        let (t1, y1) = points[points.len() - 1];
        ((y1 - y0) / f64::from(t1 - t0)).max(0.0)
    }
}

impl Forecaster for LinearRate {
    fn name(&self) -> &str {
        "linear_rate"
    }

    fn predict(&self, request: &ForecastRequest) -> Result<Vec<f64>> {
        let r = request.request_minute;
        let from = r.saturating_sub(self.window);
        let (t_last, y_last) = request
            .latest_current_day()
            .ok_or(ModeError::EmptyInput("current-day history"))?;

        let mut points: Vec<(u32, f64)> = request.current_day().filter(|(m, _)| *m >= from).collect();
        if points.len() < 2 {
            points = request.current_day().rev().take(2).collect();
            points.reverse();
        }
        if points.len() < 2 {
            points = request
                .previous_day()
                .filter(|(m, _)| (from..=r).contains(m))
                .collect();
        }
        if points.len() < 2 {
            return Err(ModeError::InsufficientHistory(
                "linear rate needs at least two observed points".into(),
            ));
        }
        let rate = Self::rate(&points);
        Ok(request
            .horizon_minutes()
            .map(|m| y_last + rate * f64::from(m - t_last))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, synthetic_value, GeneratorConfig, POINTS_PER_DAY};

    #[test]
    fn mape_arithmetic() {
        assert_eq!(mape(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!((mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap() - 0.10).abs() < 1e-15);
        assert!((mape(&[0.0, 100.0], &[5.0, 110.0]).unwrap() - 0.10).abs() < 1e-15);
        assert_eq!(mape(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(mape(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mape(&[], &[]).is_err());
    }

    #[test]
    fn default_protocol_cells() {
        let p = EvalProtocol::default();
        p.validate().unwrap();
        let cells = p.cells();
        assert_eq!(cells, vec![(0, 120), (0, 240), (1, 120), (1, 240), (2, 120)]);
        assert_eq!(p.request_minutes(2, 120), 1200..1201);
        assert_eq!(p.request_minutes(1, 240), 840..1200);
        assert!(p.request_minutes(2, 240).is_empty());
    }

    #[test]
    fn protocol_validation() {
        let mut p = EvalProtocol::default();
        p.intervals[1].start = 800;
        assert!(p.validate().unwrap_err().to_string().contains("overlap"));
        let mut p = EvalProtocol::default();
        p.horizons = vec![0];
        assert!(p.validate().is_err());
    }

    fn day_from(values: Vec<f64>) -> DailySeries {
        DailySeries::fully_observed(0, values).unwrap()
    }

    struct Oracle(DailySeries);

    impl Forecaster for Oracle {
        fn name(&self) -> &str {
            "oracle"
        }
        fn predict(&self, request: &ForecastRequest) -> Result<Vec<f64>> {
            Ok(request
                .horizon_minutes()
                .map(|m| self.0.raw_values()[m as usize])
                .collect())
        }
    }

    fn synthetic_day(zeta: i64) -> DailySeries {
        day_from((0..POINTS_PER_DAY).map(|t| synthetic_value(zeta, t, true)).collect())
    }

    #[test]
    fn oracle_scores_zero() {
        let day = synthetic_day(3);
        let report = evaluate_day(&Oracle(day.clone()), &day, &EvalProtocol::default(), Execution::Parallel).unwrap();
        assert_eq!(report.cells.len(), 5);
        assert!(report.cells.iter().all(|c| c.mean_mape == 0.0));
        assert!(report.cell("Interval3", 240).is_none());
        assert_eq!(report.cell("Interval3", 120).unwrap().n_requests, 1);
    }

    #[test]
    fn persistence_matches_closed_form() {
        let zeta = 4;
        let day = synthetic_day(zeta);
        let report = evaluate_day(&Persistence, &day, &EvalProtocol::default(), Execution::Sequential).unwrap();
        for c in &report.cells {
            assert!(c.mean_mape > 0.0);
        }
        // Brute-force the 14:00 request: the error at minute r+k is rate*k / y(r+k).
        let r = 840usize;
        let brute: f64 = (1..=120)
            .map(|k| {
                let y = synthetic_value(zeta, r + k, true);
                (y - synthetic_value(zeta, r, true)).abs() / y
            })
            .sum::<f64>()
            / 120.0;
        let req = ForecastRequest::build(&day, None, r as u32);
        let pred = Persistence.predict(&req).unwrap();
        let actual: Vec<f64> = (r + 1..=r + 120).map(|m| day.raw_values()[m]).collect();
        let got = mape(&actual, &pred[..120]).unwrap();
        assert!((got - brute).abs() < 1e-12);
        let rate = zeta as f64 * 15f64.exp() * 6.0e-5;
        let closed: f64 = (1..=120)
            .map(|k| rate * k as f64 / synthetic_value(zeta, r + k, true))
            .sum::<f64>()
            / 120.0;
        assert!((got - closed).abs() < 1e-12);
    }

    #[test]
    fn persistence_on_flat_day_is_exact() {
        let day = day_from(vec![5.0; POINTS_PER_DAY]);
        let report = evaluate_day(&Persistence, &day, &EvalProtocol::default(), Execution::Parallel).unwrap();
        assert!(report.cells.iter().all(|c| c.mean_mape == 0.0));
    }

    #[test]
    fn linear_rate_exact_on_linear_day() {
        let day = day_from((0..POINTS_PER_DAY).map(|t| 10.0 + 3.0 * t as f64).collect());
        let report = evaluate_day(&LinearRate::default(), &day, &EvalProtocol::default(), Execution::Parallel).unwrap();
        assert!(report.cells.iter().all(|c| c.mean_mape < 1e-14), "{report:?}");
    }

    #[test]
    fn linear_rate_flat_equals_persistence() {
        let day = day_from(vec![7.0; POINTS_PER_DAY]);
        let req = ForecastRequest::build(&day, None, 500);
        assert_eq!(LinearRate::default().predict(&req).unwrap(), Persistence.predict(&req).unwrap());
    }

    #[test]
    fn linear_rate_across_the_kink_matches_simulation() {
        let zeta = 2;
        let day = synthetic_day(zeta);
        let r = 450usize;
        let window = 60usize;
        // Direct simulation: slope between minutes r-60 and r, carried forward from y(r).
        let slope = (synthetic_value(zeta, r, true) - synthetic_value(zeta, r - window, true)) / window as f64;
        let brute: f64 = (1..=120)
            .map(|k| {
                let y = synthetic_value(zeta, r + k, true);
                let p = synthetic_value(zeta, r, true) + slope * k as f64;
                ((y - p) / y).abs()
            })
            .sum::<f64>()
            / 120.0;
        let req = ForecastRequest::build(&day, None, r as u32);
        let pred = LinearRate { window: window as u32 }.predict(&req).unwrap();
        let actual: Vec<f64> = (r + 1..=r + 120).map(|m| day.raw_values()[m]).collect();
        let got = mape(&actual, &pred[..120]).unwrap();
        assert!(got > 0.0);
        assert!((got - brute).abs() < 1e-12, "{got} vs {brute}");
    }

    #[test]
    fn linear_rate_clamps_decreasing_history() {
        let day = day_from((0..POINTS_PER_DAY).map(|t| 1e4 - t as f64).collect());
        let req = ForecastRequest::build(&day, None, 600);
        let pred = LinearRate::default().predict(&req).unwrap();
        assert!(pred.iter().all(|&p| p == day.raw_values()[600]));
    }

    #[test]
    fn linear_rate_falls_back_to_previous_day() {
        let prev = day_from((0..POINTS_PER_DAY).map(|t| 2.0 * t as f64).collect());
        let cur = gen_synthetic(&GeneratorConfig::default()).unwrap().day(0).clone();
        let mut mask = vec![false; POINTS_PER_DAY];
        mask[0] = true;
        let cur = DailySeries::new(1, cur.raw_values().to_vec(), mask).unwrap();
        let req = ForecastRequest::build(&cur, Some(&prev), 30);
        let pred = LinearRate::default().predict(&req).unwrap();
        assert_eq!(pred[0], 2.0 * 31.0);
        assert!(LinearRate::default().predict(&ForecastRequest::build(&cur, None, 30)).is_err());
    }

    #[test]
    fn latency_percentiles() {
        let stats = LatencyStats::from_seconds((1..=100).map(f64::from).collect()).unwrap();
        assert_eq!(stats.p50_seconds, 50.0);
        assert_eq!(stats.p99_seconds, 99.0);
        assert_eq!(stats.max_seconds, 100.0);
        assert!(LatencyStats::from_seconds(vec![]).is_none());
    }

    #[test]
    fn report_csv_layout() {
        let day = synthetic_day(2);
        let report = evaluate_day(&Persistence, &day, &EvalProtocol::default(), Execution::Parallel).unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("interval,horizon,mean_mape,std_mape,n_requests,n_skipped"));
        assert_eq!(lines.count(), 5);
        let json: EvalReport = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(json, report);
    }
}
