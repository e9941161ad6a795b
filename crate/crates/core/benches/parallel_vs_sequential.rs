use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use gppm_core::model::{GppmModel, ModelSpec};
use gppm_core::par::Parallelism;
use gppm_core::simulate::{gppm_simulate, CalendarLevel, CyclicLevel, SimDesign};

fn model(n_customers: usize, par: Parallelism) -> GppmModel {
    let sim = gppm_simulate(&SimDesign {
        cyclic_level: CyclicLevel::Strongcyc,
        calendar_level: CalendarLevel::NonlinDeccal,
        n_customers,
        horizon: 100,
        seed: 7,
        ..SimDesign::default()
    })
    .expect("simulation");
    let spec = ModelSpec {
        install_effects: false,
        ..ModelSpec::full()
    };
    let mut m = GppmModel::new(&sim.panel, spec).expect("model");
    m.parallelism = par;
    m
}

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_posterior_gradient");
    group.sample_size(20);
    for n in [200, 1000] {
        for (name, par) in [("sequential", Parallelism::Sequential), ("rayon", Parallelism::Rayon)] {
            let m = model(n, par);
            let theta = vec![0.05; m.dim()];
            group.bench_with_input(BenchmarkId::new(name, n), &theta, |b, theta| {
                b.iter(|| m.grad_log_posterior(black_box(theta)).expect("gradient"))
            });
        }
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_panel");
    group.sample_size(10);
    for (name, par) in [("sequential", Parallelism::Sequential), ("rayon", Parallelism::Rayon)] {
        let d = SimDesign {
            n_customers: 2000,
            parallelism: par,
            ..SimDesign::default()
        };
        group.bench_function(name, |b| b.iter(|| gppm_simulate(black_box(&d)).expect("simulation")));
    }
    group.finish();
}

criterion_group!(benches, gradient, simulation);
criterion_main!(benches);
