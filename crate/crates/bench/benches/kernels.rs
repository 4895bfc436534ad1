use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use paramtrack_bench::{sphere, square};
use paramtrack_core::linalg::{SolverKind, SolverOptions};
use paramtrack_core::metric::{inject, solve_mu, MetricConfig, MetricOperator};
use paramtrack_core::preshape::{assemble_derivative, Component};
use paramtrack_core::NodalField;

fn derivative(c: &mut Criterion) {
    let (s, spec) = square();
    c.bench_function("derivative/square", |b| {
        b.iter(|| assemble_derivative(black_box(&s), &spec, Component::Full).unwrap())
    });
    let (s, spec, _, _) = sphere();
    c.bench_function("derivative/sphere tangential", |b| {
        b.iter(|| assemble_derivative(black_box(&s), &spec, Component::Tangential).unwrap())
    });
}

fn metric(c: &mut Criterion) {
    let cfg = MetricConfig::default();
    let (s, spec) = square();
    let mesh = s.reference();
    let mu = NodalField::constant(mesh.n_vertices(), 1.0);
    let rhs = assemble_derivative(&s, &spec, Component::Full).unwrap();
    let op = MetricOperator::assemble(mesh, s.positions(), &mu, &cfg).unwrap();
    let mut g = c.benchmark_group("metric/square");
    g.bench_function("assemble", |b| {
        b.iter(|| MetricOperator::assemble(mesh, black_box(s.positions()), &mu, &cfg).unwrap())
    });
    for kind in [SolverKind::Direct, SolverKind::Cg] {
        let opts = SolverOptions {
            kind,
            ..Default::default()
        };
        g.bench_function(format!("solve {kind:?}"), |b| {
            b.iter(|| op.solve(black_box(&rhs.values), &opts).unwrap())
        });
    }
    g.finish();

    let cfg = MetricConfig {
        mu_max: 30.0,
        mu_min: 5.0,
        ..MetricConfig::default()
    };
    let (s, spec, holdall, map) = sphere();
    let mu = solve_mu(&holdall, &map, &cfg).unwrap();
    let d = assemble_derivative(&s, &spec, Component::Tangential).unwrap();
    let rhs = inject(&d, &map, holdall.n_vertices()).unwrap();
    let op = MetricOperator::assemble(&holdall, holdall.vertices(), &mu, &cfg).unwrap();
    let mut g = c.benchmark_group("metric/hold-all");
    g.sample_size(10);
    g.bench_function("assemble", |b| {
        b.iter(|| {
            MetricOperator::assemble(&holdall, black_box(holdall.vertices()), &mu, &cfg).unwrap()
        })
    });
    g.bench_function("solve Direct", |b| {
        let opts = SolverOptions {
            kind: SolverKind::Direct,
            ..Default::default()
        };
        b.iter(|| op.solve(black_box(&rhs.values), &opts).unwrap())
    });
    g.finish();
}

criterion_group!(benches, derivative, metric);
criterion_main!(benches);
