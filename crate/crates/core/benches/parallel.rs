use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mfgan_core::dynamics::{toy_by_name, weak_error_table, Mode, Quadratic, WeakErrorConfig};
use mfgan_core::fdr::{fdr2_gap, probe_trajectory, ProbeConfig, TrajectorySource};
use mfgan_core::mfg::{build_networks, log_normalizer, torus_grid, ErgodicMfgProblem, MfgProblem, SolverConfig};
use mfgan_core::par::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn weak_error_replicas(c: &mut Criterion) {
    let toy = toy_by_name("linear").unwrap();
    let mut group = c.benchmark_group("weak_error_replicas");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = WeakErrorConfig { etas: vec![0.05], replicas: 4096, exec, ..WeakErrorConfig::default() };
        group.bench_with_input(BenchmarkId::new(name, cfg.replicas), &cfg, |b, cfg| {
            b.iter(|| weak_error_table(toy.as_ref(), Mode::Alt, black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

fn density_normalizer(c: &mut Criterion) {
    let problem = MfgProblem::Ergodic(ErgodicMfgProblem::sine_test_class(4).unwrap());
    let config = SolverConfig::for_dim(4);
    let (_, m_net) = build_networks(&problem, &config).unwrap();
    let params = m_net.init(&mut ChaCha8Rng::seed_from_u64(7));
    let grid = torus_grid(4, 8);
    let mut group = c.benchmark_group("density_normalizer_4d");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, grid.len()), &grid, |b, grid| {
            b.iter(|| log_normalizer(&m_net, &params, black_box(grid), exec).unwrap())
        });
    }
    group.finish();
}

fn stationary_moments(c: &mut Criterion) {
    let toy = Quadratic::anisotropic();
    let base = ProbeConfig {
        mode: Mode::Sml,
        eta: 0.02,
        batch_size: 8,
        beta: None,
        source: TrajectorySource::Discrete,
        samples: 200_000,
        thin: 1,
        init: vec![0.0, 0.0],
        seed: 3,
        exec: Exec::Sequential,
    };
    let samples = probe_trajectory(&toy, &base).unwrap();
    let beta = base.beta().unwrap();
    let mut group = c.benchmark_group("fdr2_moments");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, samples.len()), &samples, |b, s| {
            b.iter(|| fdr2_gap(&toy, black_box(s), beta, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, weak_error_replicas, density_normalizer, stationary_moments);
criterion_main!(benches);
