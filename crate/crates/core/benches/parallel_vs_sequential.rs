use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mdi_core::exec::{self, Execution};
use mdi_core::quantify::{werner_quantity_sweep, Quantity};
use mdi_core::quantum::{bsm, tomo4_inputs, werner};
use mdi_core::relax::RelaxationLevel;
use mdi_core::scenario::{simulate_bipartite, tomographic_reconstruction};

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

/// Simulation and reconstruction over a Werner grid: many cheap independent items.
fn simulate_grid(c: &mut Criterion) {
    let ens = tomo4_inputs();
    let grid: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
    let mut g = c.benchmark_group("simulate_and_reconstruct_64");
    for (name, mode) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec::map(mode, &grid, |&w| {
                    let beh = simulate_bipartite(&werner(w).unwrap(), &bsm(), &bsm(), &ens, &ens).unwrap();
                    tomographic_reconstruction(&beh).unwrap()
                })
            })
        });
    }
    g.finish();
}

/// Negativity sweep: a few expensive independent conic solves.
fn negativity_sweep(c: &mut Criterion) {
    let ens = tomo4_inputs();
    let grid = [0.4, 0.6, 0.8, 1.0];
    let mut g = c.benchmark_group("negativity_sweep_4");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    for (name, mode) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| werner_quantity_sweep(Quantity::Negativity, &ens, &grid, RelaxationLevel::Ppt, mode))
        });
    }
    g.finish();
}

criterion_group!(benches, simulate_grid, negativity_sweep);
criterion_main!(benches);
