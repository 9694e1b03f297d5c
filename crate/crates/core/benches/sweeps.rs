//! Sequential vs rayon execution of the two data-parallel workloads:
//! random-point residual sweeps and trajectory batches.

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use covmech::catalog;
use covmech::dynamics::{integrate_batch, IntegratorConfig};
use covmech::killing::conserved_check_with;
use covmech::sweep::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn conserved_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("conserved_check");
    for (system, name) in [("kerr", "K"), ("quantum-dot", "G4"), ("su2-plane", "K_x")] {
        let sys = catalog::build(system, &BTreeMap::new()).unwrap();
        let obs = sys.observable(name).unwrap();
        let sample = sys.sample(1000, 42);
        for (mode, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(mode, format!("{system}/{name}")), &exec, |b, &exec| {
                b.iter(|| conserved_check_with(&sys.hamiltonian, &*obs, &sample, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn trajectory_batches(c: &mut Criterion) {
    let mut group = c.benchmark_group("integrate_batch");
    group.sample_size(10);
    let sys = catalog::build("kerr", &BTreeMap::new()).unwrap();
    let starts: Vec<_> = (0..16)
        .map(|i| {
            let mut p = sys.default_initial.clone();
            p.pi[2] *= 1.0 + 0.01 * i as f64;
            p
        })
        .collect();
    let cfg = IntegratorConfig::rk45(1e-10, 1e-12).with_record_every(100);
    for (mode, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(mode, "kerr/16x100"), &exec, |b, &exec| {
            b.iter(|| integrate_batch(&sys.hamiltonian, &starts, &cfg, (0.0, 100.0), &sys.invariants, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, conserved_sweeps, trajectory_batches);
criterion_main!(benches);
