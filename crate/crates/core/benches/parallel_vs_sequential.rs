use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use zo_sliding::geomedian::{run_experiment, Algo, ExperimentConfig, Network};
use zo_sliding::network::Topology;
use zo_sliding::par::Exec;
use zo_sliding::sampling::{one_point_statistics, EstimatorConfig, StochasticValueOracle};
use zo_sliding::ProxSetup;

fn modes() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn monte_carlo(c: &mut Criterion) {
    let n = 10;
    let x = vec![0.3; n];
    let setup = ProxSetup::euclidean(n);
    let cfg = EstimatorConfig::new(0.1, n).unwrap();
    let mut group = c.benchmark_group("one_point_statistics");
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::new(name, 100_000), |b| {
            b.iter(|| {
                one_point_statistics(
                    |seed| {
                        let f = |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>().sqrt();
                        StochasticValueOracle::new(f, n, 0.01, seed).unwrap()
                    },
                    &setup,
                    cfg,
                    black_box(&x),
                    100_000,
                    1,
                    exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn seed_sweep(c: &mut Criterion) {
    let cfg = ExperimentConfig {
        n: 5,
        m: 5,
        networks: vec![Network::Graph(Topology::Cycle)],
        n_outer: 20,
        md_steps: Some(100),
        seeds: (0..8).collect(),
        algorithms: Algo::ALL.to_vec(),
        step_grid: vec![1e-3, 1e-2],
        tune_seeds: 2,
        ..ExperimentConfig::desk()
    };
    let mut group = c.benchmark_group("geomedian_sweep");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::new(name, cfg.seeds.len()), |b| {
            b.iter(|| run_experiment(black_box(&cfg), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, seed_sweep);
criterion_main!(benches);
