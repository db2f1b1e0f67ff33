//! Throughput benchmarks for the inference hot paths.
//!
//! The posterior-draw benchmarks run the same workload on the default
//! rayon pool and on a single-thread pool, so one `cargo bench` run shows
//! the data-parallel speedup. Building with `--no-default-features`
//! benchmarks the fully sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mlndlm::{
    cu_pipeline, dmdb_sample_eta, evaluate, filter, map_estimate, simulate, DmdbConfig,
    LatentEta, OptimizerConfig, SimConfig,
};
use std::hint::black_box;

fn sim(d: usize, t: usize, seed: u64) -> (mlndlm::CountDataset, mlndlm::ModelSpec, LatentEta) {
    let config = SimConfig::new(d, t, seed);
    let (data, spec, truth) = simulate(&config).unwrap();
    let eta = LatentEta::new(truth.eta.clone()).unwrap();
    (data, spec, eta)
}

fn bench_filter(c: &mut Criterion) {
    let mut group = c.benchmark_group("filter");
    for &(d, t) in &[(3usize, 300usize), (10, 300), (30, 600)] {
        let (data, spec, eta) = sim(d, t, 1);
        group.bench_with_input(BenchmarkId::new("forward", format!("D{d}_T{t}")), &(), |b, _| {
            b.iter(|| filter(black_box(&spec), black_box(&eta), black_box(&data)).unwrap())
        });
    }
    group.finish();
}

fn bench_objective(c: &mut Criterion) {
    let mut group = c.benchmark_group("objective");
    for &(d, t) in &[(3usize, 300usize), (10, 300), (30, 600)] {
        let (data, spec, eta) = sim(d, t, 2);
        group.bench_with_input(
            BenchmarkId::new("value_and_grad", format!("D{d}_T{t}")),
            &(),
            |b, _| b.iter(|| evaluate(black_box(&spec), black_box(&data), black_box(&eta)).unwrap()),
        );
    }
    group.finish();
}

fn bench_map(c: &mut Criterion) {
    let mut group = c.benchmark_group("map_estimate");
    group.sample_size(10);
    let (data, spec, _) = sim(3, 300, 3);
    let config = OptimizerConfig::default();
    group.bench_function("D3_T300", |b| {
        b.iter(|| map_estimate(black_box(&spec), black_box(&data), black_box(&config)).unwrap())
    });
    group.finish();
}

fn bench_posterior_draws(c: &mut Criterion) {
    let mut group = c.benchmark_group("posterior_draws");
    group.sample_size(10);
    let (data, spec, _) = sim(3, 300, 4);
    let opt = OptimizerConfig::default();
    let map = map_estimate(&spec, &data, &opt).unwrap();
    let dmdb = DmdbConfig {
        num_samples: 500,
        seed: 9,
        ..DmdbConfig::default()
    };

    group.bench_function("dmdb_500_draws", |b| {
        b.iter(|| dmdb_sample_eta(&spec, &map.eta_hat, &data, black_box(&dmdb)).unwrap())
    });

    #[cfg(feature = "parallel")]
    {
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        group.bench_function("cu_pipeline_500/threads_1", |b| {
            b.iter(|| pool1.install(|| cu_pipeline(&spec, &data, &dmdb, &opt).unwrap()))
        });
        group.bench_function("cu_pipeline_500/threads_default", |b| {
            b.iter(|| cu_pipeline(&spec, &data, &dmdb, &opt).unwrap())
        });
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function("cu_pipeline_500/sequential_build", |b| {
        b.iter(|| cu_pipeline(&spec, &data, &dmdb, &opt).unwrap())
    });

    group.finish();
}

criterion_group!(
    benches,
    bench_filter,
    bench_objective,
    bench_map,
    bench_posterior_draws
);
criterion_main!(benches);
