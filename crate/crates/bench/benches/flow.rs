use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use geoflow::diagnostics::manifold_distance;
use geoflow::mesh::{make_ellipsoid, make_icosphere};
use geoflow::solver::{
    assemble_newton_system, step, CondensedSolver, LinearSolver, LinearStrategy, NewtonIterate,
    StepContext,
};
use geoflow::{EnergyDensity, FlowState, StepConfig};

fn ellipsoid_state(level: u32) -> FlowState {
    FlowState::initial(make_ellipsoid(2.0, 1.0, level).unwrap(), 1e6).unwrap()
}

fn newton_update(c: &mut Criterion) {
    let mut group = c.benchmark_group("newton_update");
    group.sample_size(10);
    for level in [2u32, 3] {
        let state = ellipsoid_state(level);
        let config = StepConfig::new(1e-3, EnergyDensity::Willmore);
        let ctx = StepContext::new(&state, &config).unwrap();
        let it = NewtonIterate::initial(&state);
        group.bench_with_input(BenchmarkId::new("assemble_full", level), &level, |b, _| {
            b.iter(|| assemble_newton_system(&state, &ctx, &it, &config).unwrap())
        });
        let mut full = LinearSolver::new();
        group.bench_with_input(BenchmarkId::new("full", level), &level, |b, _| {
            b.iter(|| {
                let system = assemble_newton_system(&state, &ctx, &it, &config).unwrap();
                full.solve(&system).unwrap()
            })
        });
        let mut reduced = CondensedSolver::new();
        group.bench_with_input(BenchmarkId::new("reduced", level), &level, |b, _| {
            b.iter(|| reduced.update(&state, &ctx, &it, &config).unwrap())
        });
    }
    group.finish();
}

fn time_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("time_step");
    group.sample_size(10);
    let state = ellipsoid_state(3);
    for strategy in [LinearStrategy::Reduced, LinearStrategy::Full] {
        let mut config = StepConfig::new(1e-3, EnergyDensity::Willmore);
        config.linear_strategy = strategy;
        group.bench_function(format!("{strategy:?}"), |b| {
            b.iter(|| step(&state, &config).unwrap())
        });
    }
    group.finish();
}

fn distance(c: &mut Criterion) {
    let mut group = c.benchmark_group("manifold_distance");
    group.sample_size(10);
    let a = make_icosphere(4, 1.0).unwrap();
    let b = make_ellipsoid(1.2, 0.9, 4).unwrap();
    for res in [128usize, 512] {
        group.bench_with_input(BenchmarkId::from_parameter(res), &res, |bench, &res| {
            bench.iter(|| manifold_distance(&a, &b, res).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, newton_update, time_step, distance);
criterion_main!(benches);
