//! Parallel vs sequential execution of the independent work items: sweep
//! points, branch points and Monte Carlo paths.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kuramoto_mfg::bifurcation::branch_sweep;
use kuramoto_mfg::sde::{simulate_stationary_with, SimConfig};
use kuramoto_mfg::sensitivity::derivative_sweep;
use kuramoto_mfg::*;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn sweep(c: &mut Criterion) {
    let g = make_grid(256).unwrap();
    let opts = SolverOptions::default();
    let zetas = [0.5, 1.0, 2.0, 4.0, 8.0];
    let mut group = c.benchmark_group("derivative_sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| derivative_sweep(1.0, &zetas, &g, &opts, exec).unwrap())
        });
    }
    group.finish();
}

fn branch(c: &mut Criterion) {
    let g = make_grid(256).unwrap();
    let opts = SolverOptions::default();
    let kappas = [1.6, 2.0, 2.5, 3.0, 4.0, 5.0];
    let mut group = c.benchmark_group("branch_sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| branch_sweep(1.0, 1.0, &kappas, &g, &opts, exec).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let g = make_grid(256).unwrap();
    let sol = solve_hjb(ModelParams::new(1.0, 2.0).unwrap(), &g, &SolverOptions::default()).unwrap();
    let cfg = SimConfig { n_paths: 32, horizon: 10.0, burn_in: 1.0, ..Default::default() };
    let mut group = c.benchmark_group("simulate_stationary");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_stationary_with(&sol, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, branch, monte_carlo);
criterion_main!(benches);
