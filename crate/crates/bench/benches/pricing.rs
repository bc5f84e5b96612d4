use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sppc_core::fixtures::{benchmark_contract, benchmark_model};
use sppc_core::mc_engine::{price_plain, price_with_cv, pricing_grid, Simulator};
use sppc_core::quasi_analytic::{gaussian_moments, price_period_product};
use sppc_core::{CvMode, Measure, QuasiMethod, SimConfig};

fn config(cv_mode: CvMode) -> SimConfig {
    SimConfig { n_paths: 10_000, step: 1.0 / 64.0, seed: 1, cv_mode, ..SimConfig::default() }
}

fn monte_carlo(c: &mut Criterion) {
    let model = benchmark_model();
    let contract = benchmark_contract();
    let mut g = c.benchmark_group("monte_carlo_10k_paths");
    g.sample_size(10);
    g.bench_function("plain", |b| b.iter(|| price_plain(&model, &contract, &config(CvMode::None)).unwrap()));
    g.bench_function("cv_unit", |b| {
        b.iter(|| price_with_cv(&model, &contract, &config(CvMode::UnitCoefficient)).unwrap())
    });
    g.bench_function("cv_regression", |b| {
        b.iter(|| price_with_cv(&model, &contract, &config(CvMode::RegressionCoefficient)).unwrap())
    });
    let grid = pricing_grid(&model, &contract, 1.0 / 64.0).unwrap();
    let sim = Simulator::new(&model, grid.times(), Measure::Optimal).unwrap();
    g.bench_function("simulate_terminal_log_stock", |b| {
        let last = grid.times().len() - 1;
        b.iter(|| sim.map_paths(10_000, 1, |_, p| p.log_series(0)[last]))
    });
    g.finish();
}

fn quasi_analytic(c: &mut Criterion) {
    let model = benchmark_model();
    let contract = benchmark_contract();
    c.bench_function("gaussian_moments", |b| {
        b.iter(|| gaussian_moments(black_box(&model), &contract, Measure::Optimal).unwrap())
    });
    c.bench_function("quadrature_price", |b| {
        b.iter(|| {
            price_period_product(black_box(&model), &contract, Measure::Optimal, QuasiMethod::Quadrature).unwrap()
        })
    });
}

criterion_group!(benches, monte_carlo, quasi_analytic);
criterion_main!(benches);
