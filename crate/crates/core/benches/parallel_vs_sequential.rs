use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mode_ode::data::{gen_synthetic, GeneratorConfig};
use mode_ode::evaluation::EvalProtocol;
use mode_ode::model::{Head, MlpParams, DEFAULT_ARCHITECTURE};
use mode_ode::parallel::{map_ordered, Execution};
use mode_ode::serving::{run_serving_day, ModeForecaster};
use mode_ode::training::{make_segments, segment_gradient, GradientMode, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn segment_gradients(c: &mut Criterion) {
    let ds = gen_synthetic(&GeneratorConfig {
        num_days: 2,
        ..Default::default()
    })
    .unwrap();
    let config = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let segments = make_segments(&ds, &config, &mut rng);
    let params = MlpParams::init(0, &DEFAULT_ARCHITECTURE, Head::Relu).unwrap();

    let mut group = c.benchmark_group("segment_gradients");
    for batch in [10, segments.len()] {
        for (name, execution) in MODES {
            group.bench_with_input(BenchmarkId::new(name, batch), &batch, |b, &n| {
                b.iter(|| {
                    map_ordered(&segments[..n], execution, |s| {
                        segment_gradient(GradientMode::Adjoint, &params, s, &config.solver).unwrap()
                    })
                })
            });
        }
    }
    group.finish();
}

fn serving_day(c: &mut Criterion) {
    let ds = gen_synthetic(&GeneratorConfig::default()).unwrap();
    let params = MlpParams::init(0, &DEFAULT_ARCHITECTURE, Head::Relu).unwrap();
    let forecaster = ModeForecaster::new(params, ds.scale());
    let protocol = EvalProtocol::default();

    let mut group = c.benchmark_group("serving_day");
    group.sample_size(20);
    for (name, execution) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| black_box(run_serving_day(&forecaster, ds.day(2), ds.day(1), &protocol, execution)))
        });
    }
    group.finish();
}

criterion_group!(benches, segment_gradients, serving_day);
criterion_main!(benches);
