use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rsgame_bench::{dense_model, gated_model, matrix_games, uniform_pair};
use rsgame_core::ergodic::perron_value;
use rsgame_core::lab::{estimate_discounted, feynman_kac, Sampler};
use rsgame_core::{
    hamiltonian_eval, solve_discounted, solve_ergodic, solve_matrix_game, DiscountedConfig, ErgodicConfig,
    StrategyProfile,
};
use std::hint::black_box;

fn matrix_game(c: &mut Criterion) {
    let mut g = c.benchmark_group("matrix_game");
    for size in [2, 4, 8] {
        let games = matrix_games(size, 32);
        g.bench_with_input(BenchmarkId::from_parameter(size), &games, |b, games| {
            b.iter(|| {
                for game in games {
                    black_box(solve_matrix_game(game).unwrap());
                }
            })
        });
    }
    g.finish();
}

fn hamiltonian(c: &mut Criterion) {
    let mut g = c.benchmark_group("hamiltonian");
    for n in [5, 20, 50] {
        let m = dense_model(n, 3);
        let psi: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| black_box(hamiltonian_eval(&m, &psi, 0.5).unwrap()))
        });
    }
    g.finish();
}

fn discounted(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_discounted");
    g.sample_size(10);
    for n in [3, 6] {
        let m = dense_model(n, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| black_box(solve_discounted(&m, &DiscountedConfig::default(), 0.9).unwrap()))
        });
    }
    g.finish();
}

fn ergodic(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_ergodic");
    g.sample_size(10);
    for n in [4, 10, 20] {
        let (m, cert) = gated_model(n, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| black_box(solve_ergodic(&m, Some(&cert), &[], &ErgodicConfig::default()).unwrap()))
        });
    }
    g.finish();
}

fn oracles(c: &mut Criterion) {
    let m = dense_model(20, 2);
    let (v1, v2) = uniform_pair(&m);
    c.bench_function("perron_value/20", |b| {
        b.iter(|| black_box(perron_value(&m, &v1, &v2).unwrap()))
    });
    c.bench_function("feynman_kac/20", |b| {
        b.iter(|| black_box(feynman_kac(&m, &v1, &v2, 1.0).unwrap()))
    });
}

fn monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate_discounted");
    g.sample_size(10);
    let m = dense_model(5, 2);
    let (v1, v2) = uniform_pair(&m);
    let profile = StrategyProfile::stationary(v1, v2);
    for sampler in [Sampler::Exact, Sampler::Literal] {
        g.bench_with_input(
            BenchmarkId::new("1000_paths", format!("{sampler:?}")),
            &sampler,
            |b, &s| b.iter(|| black_box(estimate_discounted(&m, &profile, 0.5, 0, 5.0, 1000, 1, s).unwrap())),
        );
    }
    g.finish();
}

criterion_group!(
    benches,
    matrix_game,
    hamiltonian,
    discounted,
    ergodic,
    oracles,
    monte_carlo
);
criterion_main!(benches);
