//! Daily cumulative series, the synthetic generator, missing-data masks and
//! CSV persistence.
//!
//! Every day holds exactly 1440 per-minute values and resets to 0 at
//! midnight. The model works on values divided by the dataset's `scale`;
//! raw synthetic values are of order `e^15`.

use std::path::{Path, PathBuf};

use rand::distributions::{Bernoulli, Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModeError, Result};

pub const POINTS_PER_DAY: usize = 1440;

/// Minute at which the synthetic generator switches to the faster rate.
pub const KINK_MINUTE: usize = 420;
const SLOW_RATE: f64 = 1.2e-5;
const FAST_RATE: f64 = 6.0e-5;

/// One day of per-minute cumulative values. `mask[m]` is true when minute `m` was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub day_index: u32,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl DailySeries {
    pub fn new(day_index: u32, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != POINTS_PER_DAY || mask.len() != POINTS_PER_DAY {
            return Err(ModeError::LengthMismatch {
                left: values.len().min(mask.len()),
                right: POINTS_PER_DAY,
            });
        }
        if let Some(m) = (0..POINTS_PER_DAY).find(|&m| mask[m] && !values[m].is_finite()) {
            return Err(ModeError::config(
                "values",
                format!("day {day_index} minute {m}: observed value is not finite"),
            ));
        }
        Ok(Self {
            day_index,
            values,
            mask,
        })
    }

    pub fn fully_observed(day_index: u32, values: Vec<f64>) -> Result<Self> {
        Self::new(day_index, values, vec![true; POINTS_PER_DAY])
    }

    /// Observed value at `minute`, or `None` if masked out.
    pub fn observed(&self, minute: usize) -> Option<f64> {
        self.mask[minute].then(|| self.values[minute])
    }

    pub fn is_observed(&self, minute: usize) -> bool {
        self.mask[minute]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Underlying values, including those hidden by the mask.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `(minute, value)` for every observed minute in `range`.
    pub fn observed_points(
        &self,
        range: std::ops::Range<usize>,
    ) -> impl Iterator<Item = (usize, f64)> + '_ {
        range.filter_map(move |m| self.observed(m).map(|v| (m, v)))
    }

    pub fn unmasked(&self) -> Self {
        Self {
            day_index: self.day_index,
            values: self.values.clone(),
            mask: vec![true; POINTS_PER_DAY],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    days: Vec<DailySeries>,
    scale: f64,
}

impl Dataset {
    pub fn new(days: Vec<DailySeries>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(ModeError::config("scale", "must be positive and finite"));
        }
        if let Some(w) = days.windows(2).find(|w| w[1].day_index <= w[0].day_index) {
            return Err(ModeError::config(
                "days",
                format!("day index {} does not follow {}", w[1].day_index, w[0].day_index),
            ));
        }
        Ok(Self { days, scale })
    }

    /// Builds a dataset whose scale is the largest absolute observed value.
    pub fn with_auto_scale(days: Vec<DailySeries>) -> Result<Self> {
        let scale = max_abs_observed(&days);
        Self::new(days, if scale > 0.0 { scale } else { 1.0 })
    }

    pub fn days(&self) -> &[DailySeries] {
        &self.days
    }

    pub fn day(&self, i: usize) -> &DailySeries {
        &self.days[i]
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn scale_value(&self, y_raw: f64) -> f64 {
        y_raw / self.scale
    }

    pub fn unscale_value(&self, y_scaled: f64) -> f64 {
        y_scaled * self.scale
    }

    /// Days `range` as a new dataset sharing this dataset's scale.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            days: self.days[range].to_vec(),
            scale: self.scale,
        }
    }

    /// Hides each minute independently with probability `rate`. Minute 0 of
    /// every day is always kept so each day has an initial value. Values are
    /// untouched.
    pub fn apply_missing(&self, rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(ModeError::config("missing_rate", format!("{rate} not in [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let drop = Bernoulli::new(rate).expect("rate checked above");
        let days = self
            .days
            .iter()
            .map(|day| {
                let mut mask = day.mask.clone();
                for slot in mask.iter_mut().skip(1) {
                    if drop.sample(&mut rng) {
                        *slot = false;
                    }
                }
                DailySeries {
                    day_index: day.day_index,
                    values: day.values.clone(),
                    mask,
                }
            })
            .collect();
        Ok(Self {
            days,
            scale: self.scale,
        })
    }

    pub fn unmasked(&self) -> Self {
        Self {
            days: self.days.iter().map(DailySeries::unmasked).collect(),
            scale: self.scale,
        }
    }

    /// Writes `path` (one row per minute) and the `{ "scale": .. }` sidecar.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::with_capacity(self.days.len() * POINTS_PER_DAY * 24);
        out.push_str("day,minute,value,observed\n");
        for day in &self.days {
            for m in 0..POINTS_PER_DAY {
                match day.observed(m) {
                    Some(v) => out.push_str(&format!("{},{m},{v:?},1\n", day.day_index)),
                    None => out.push_str(&format!("{},{m},NAN,0\n", day.day_index)),
                }
            }
        }
        std::fs::write(path, out)?;
        let sidecar = serde_json::to_string_pretty(&ScaleSidecar { scale: self.scale })?;
        std::fs::write(scale_sidecar_path(path), sidecar)?;
        Ok(())
    }

    /// Reads a dataset written by [`save_csv`](Self::save_csv). Without a
    /// sidecar the scale falls back to the largest absolute observed value.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_path(path)
            .map_err(|e| csv_error(0, e))?;
        let header = reader.headers().map_err(|e| csv_error(1, e))?.clone();
        let expected = ["day", "minute", "value", "observed"];
        if header.len() != 4 || header.iter().zip(expected).any(|(a, b)| a.trim() != b) {
            return Err(ModeError::Csv {
                line: 1,
                reason: format!("expected header `day,minute,value,observed`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
            });
        }

        let mut days: Vec<DailySeries> = Vec::new();
        let mut current: Option<(u32, Vec<f64>, Vec<bool>, usize)> = None;
        let finish = |entry: (u32, Vec<f64>, Vec<bool>, usize), line: usize| -> Result<DailySeries> {
            let (day, values, mask, _) = entry;
            if values.len() != POINTS_PER_DAY {
                return Err(ModeError::Csv {
                    line,
                    reason: format!("day {day} has {} rows, expected {POINTS_PER_DAY}", values.len()),
                });
            }
            Ok(DailySeries {
                day_index: day,
                values,
                mask,
            })
        };

        let mut last_line = 1;
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                csv_error(line, e)
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            last_line = line;
            if record.len() != 4 {
                return Err(ModeError::Csv {
                    line,
                    reason: format!("expected 4 columns, got {}", record.len()),
                });
            }
            let day: u32 = parse_field(&record[0], "day", line)?;
            let minute: usize = parse_field(&record[1], "minute", line)?;
            let observed = match record[3].trim() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(ModeError::Csv {
                        line,
                        reason: format!("observed must be 0 or 1, got `{other}`"),
                    })
                }
            };
            let value = if observed {
                let v: f64 = parse_field(&record[2], "value", line)?;
                if !v.is_finite() {
                    return Err(ModeError::Csv {
                        line,
                        reason: "observed value is not finite".into(),
                    });
                }
                v
            } else {
                f64::NAN
            };

            let starts_new = current.as_ref().is_none_or(|c| c.0 != day);
            if starts_new {
                if let Some(prev) = current.take() {
                    let prev_day = prev.0;
                    if day <= prev_day {
                        return Err(ModeError::Csv {
                            line,
                            reason: format!("day {day} does not follow day {prev_day}"),
                        });
                    }
                    days.push(finish(prev, line)?);
                }
                current = Some((day, Vec::with_capacity(POINTS_PER_DAY), Vec::with_capacity(POINTS_PER_DAY), line));
            }
            let entry = current.as_mut().expect("set above");
            if minute != entry.1.len() {
                return Err(ModeError::Csv {
                    line,
                    reason: format!("day {day}: expected minute {}, got {minute}", entry.1.len()),
                });
            }
            entry.1.push(value);
            entry.2.push(observed);
        }
        if let Some(last) = current.take() {
            days.push(finish(last, last_line)?);
        }

        let sidecar = scale_sidecar_path(path);
        if sidecar.exists() {
            let text = std::fs::read_to_string(&sidecar)?;
            let ScaleSidecar { scale } = serde_json::from_str(&text)?;
            Dataset::new(days, scale)
        } else {
            Dataset::with_auto_scale(days)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScaleSidecar {
    scale: f64,
}

/// `data.csv` -> `data.scale.json`.
pub fn scale_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("scale.json")
}

fn csv_error(line: usize, e: csv::Error) -> ModeError {
    ModeError::Csv {
        line,
        reason: e.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(raw: &str, name: &str, line: usize) -> Result<T> {
    raw.trim().parse().map_err(|_| ModeError::Csv {
        line,
        reason: format!("cannot parse {name} from `{raw}`"),
    })
}

fn max_abs_observed(days: &[DailySeries]) -> f64 {
    days.iter()
        .flat_map(|d| d.observed_points(0..POINTS_PER_DAY).map(|(_, v)| v.abs()))
        .fold(0.0, f64::max)
}

/// Settings for the piecewise-linear synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_days: u32,
    pub seed: u64,
    pub zeta_low: i64,
    pub zeta_high: i64,
    /// Offset the post-07:00 branch by the pre-07:00 endpoint so days stay continuous.
    pub continuity_fix: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_days: 3,
            seed: 0,
            zeta_low: 1,
            zeta_high: 10,
            continuity_fix: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_days < 1 {
            return Err(ModeError::config("generator.num_days", "must be at least 1"));
        }
        if self.zeta_low > self.zeta_high {
            return Err(ModeError::config(
                "generator.zeta_low",
                format!("{} exceeds zeta_high {}", self.zeta_low, self.zeta_high),
            ));
        }
        Ok(())
    }
}

/// Synthetic value at minute `t` for day multiplier `zeta`.
pub fn synthetic_value(zeta: i64, t: usize, continuity_fix: bool) -> f64 {
    let amplitude = zeta as f64 * 15f64.exp();
    if t < KINK_MINUTE {
        amplitude * SLOW_RATE * t as f64
    } else {
        let offset = if continuity_fix {
            SLOW_RATE * KINK_MINUTE as f64
        } else {
            0.0
        };
        amplitude * (FAST_RATE * (t - KINK_MINUTE) as f64 + offset)
    }
}

/// Draws one integer multiplier per day and fills that day from the generator.
pub fn gen_synthetic(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let zeta_dist = Uniform::new_inclusive(config.zeta_low, config.zeta_high);
    let days = (0..config.num_days)
        .map(|d| {
            let zeta = zeta_dist.sample(&mut rng);
            let values = (0..POINTS_PER_DAY)
                .map(|t| synthetic_value(zeta, t, config.continuity_fix))
                .collect();
            DailySeries::fully_observed(d, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::with_auto_scale(days)
}
