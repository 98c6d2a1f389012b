use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Dataset, POINTS_PER_DAY};
use crate::solver::TimeGrid;

use super::TrainConfig;

/// An initial observation and the observed targets that follow it within one day.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSegment {
    pub t0: f64,
    pub y0_scaled: f64,
    pub target_times: Vec<f64>,
    pub target_values_scaled: Vec<f64>,
}

impl TrainSegment {
    pub fn len(&self) -> usize {
        self.target_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_times.is_empty()
    }

    /// `t0` followed by the target times.
    pub fn grid(&self) -> crate::error::Result<TimeGrid> {
        let mut times = Vec::with_capacity(self.len() + 1);
        times.push(self.t0);
        times.extend_from_slice(&self.target_times);
        TimeGrid::new(times)
    }
}

/// Cuts every day into segments on the down-sampled grid.
///
/// Masked minutes never become an initial value or a target; segments left
/// with no targets are dropped. The result is shuffled with `rng`.
pub fn make_segments<R: Rng + ?Sized>(
    dataset: &Dataset,
    config: &TrainConfig,
    rng: &mut R,
) -> Vec<TrainSegment> {
    let stride = config.downsample_rate.max(1);
    let mut segments = Vec::new();
    for day in dataset.days() {
        for t0 in (0..POINTS_PER_DAY).step_by(stride) {
            let Some(y0) = day.observed(t0) else { continue };
            let end = (t0 + config.segment_length).min(POINTS_PER_DAY - 1);
            let (times, values): (Vec<f64>, Vec<f64>) = ((t0 + stride)..=end)
                .step_by(stride)
                .filter_map(|m| day.observed(m).map(|v| (m as f64, dataset.scale_value(v))))
                .unzip();
            if times.is_empty() {
                continue;
            }
            segments.push(TrainSegment {
                t0: t0 as f64,
                y0_scaled: dataset.scale_value(y0),
                target_times: times,
                target_values_scaled: values,
            });
        }
    }
    segments.shuffle(rng);
    segments
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, DailySeries, GeneratorConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_day() -> Dataset {
        gen_synthetic(&GeneratorConfig {
            num_days: 1,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn full_day_segments_have_twelve_targets() {
        let ds = one_day();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let segs = make_segments(&ds, &TrainConfig::default(), &mut rng);
        // t0 = 0..=1310 step 10 see a full 120-minute window
        let full: Vec<_> = segs.iter().filter(|s| s.t0 + 120.0 <= 1439.0).collect();
        assert_eq!(full.len(), 132);
        assert!(full.iter().all(|s| s.len() == 12));
        for s in &segs {
            assert!(s.target_times.iter().all(|&t| t > s.t0 && t <= s.t0 + 120.0 && t < 1440.0));
            assert!(s.target_times.iter().all(|&t| (t as usize) % 10 == 0));
        }
        // t0 = 1430 has nothing after it on the grid
        assert!(segs.iter().all(|s| s.t0 != 1430.0));
    }

    #[test]
    fn fully_masked_window_drops_segment() {
        let ds = one_day();
        let day = ds.day(0);
        let mut mask = day.mask().to_vec();
        for m in 101..=220 {
            mask[m] = false;
        }
        let day = DailySeries::new(0, day.raw_values().to_vec(), mask).unwrap();
        let ds = Dataset::new(vec![day], ds.scale()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let segs = make_segments(&ds, &TrainConfig::default(), &mut rng);
        assert!(segs.iter().all(|s| s.t0 != 100.0));
        assert!(segs.iter().any(|s| s.t0 == 90.0));
    }

    #[test]
    fn missing_initial_value_skips_segment() {
        let ds = one_day();
        let day = ds.day(0);
        let mut mask = day.mask().to_vec();
        mask[500] = false;
        let ds = Dataset::new(vec![DailySeries::new(0, day.raw_values().to_vec(), mask).unwrap()], ds.scale()).unwrap();
        let segs = make_segments(&ds, &TrainConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(segs.iter().all(|s| s.t0 != 500.0));
        assert!(segs.iter().all(|s| !s.target_times.contains(&500.0)));
    }

    #[test]
    fn thirty_percent_missing_leaves_about_8_4_targets() {
        let ds = one_day();
        let cfg = TrainConfig::default();
        let mut total = 0usize;
        let mut count = 0usize;
        for seed in 0..200 {
            let masked = ds.apply_missing(0.3, seed).unwrap();
            let segs = make_segments(&masked, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            for s in segs.iter().filter(|s| s.t0 + 120.0 <= 1439.0) {
                total += s.len();
                count += 1;
            }
        }
        // Segments with zero surviving targets are dropped, which nudges the
        // mean up by a negligible 12 * 0.3^12 / (1 - 0.3^12).
        let mean = total as f64 / count as f64;
        assert!((mean - 8.4).abs() <= 0.5, "{mean}");
    }

    #[test]
    fn shuffle_is_seeded() {
        let ds = one_day();
        let cfg = TrainConfig::default();
        let a = make_segments(&ds, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let b = make_segments(&ds, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let c = make_segments(&ds, &cfg, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
