use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use lvjump::closedform::explicit_logistic;
use lvjump::conditions::compute_regime_report;
use lvjump::integrate::{simulate_sandwich, simulate_system};
use lvjump::model::{Coeff, InitialState, MarkSpace, ModelSpec};
use lvjump::noise::sample_driving_path;

fn competitive() -> ModelSpec {
    let c = Coeff::constant;
    ModelSpec::new(
        vec![c(1.0), Coeff::sin(0.8, 0.2, 1.0, 0.0)],
        vec![vec![c(1.0), c(0.3)], vec![c(0.2), c(1.0)]],
        vec![c(0.3), c(0.4)],
        MarkSpace::new(vec![0.5]).unwrap(),
        vec![vec![c(0.2)], vec![c(-0.3)]],
    )
    .unwrap()
}

fn integrators(c: &mut Criterion) {
    let bench = ModelSpec::logistic(1.0, 1.0, 0.5, -0.5, 1.0);
    let path = sample_driving_path(&bench.marks, 5.0, 1.0 / 1024.0, 1).unwrap();
    let x0 = InitialState::new(vec![1.0]).unwrap();
    c.bench_function("simulate_system n=1 5120 steps", |b| {
        b.iter(|| simulate_system(&bench, &x0, black_box(&path)).unwrap())
    });
    c.bench_function("explicit_logistic 5120 steps", |b| {
        b.iter(|| explicit_logistic(&bench, 0, 1.0, black_box(&path), None).unwrap())
    });
    let model = competitive();
    let x0 = InitialState::new(vec![1.0, 1.0]).unwrap();
    c.bench_function("simulate_sandwich n=2 5120 steps", |b| {
        b.iter(|| simulate_sandwich(&model, &x0, black_box(&path)).unwrap())
    });
    c.bench_function("sample_driving_path 5120 steps", |b| {
        b.iter(|| sample_driving_path(&bench.marks, 5.0, 1.0 / 1024.0, black_box(7)).unwrap())
    });
}

fn conditions(c: &mut Criterion) {
    let constant = ModelSpec::logistic(2.0, 1.0, 1.0, 0.5, 1.0);
    c.bench_function("regime report constant", |b| {
        b.iter(|| compute_regime_report(black_box(&constant), &[2.0]))
    });
    let mut sampled = competitive();
    sampled.sigma[1] = Coeff::sin(0.4, 0.1, 3.0, 0.5);
    c.bench_function("regime report sampled", |b| {
        b.iter(|| compute_regime_report(black_box(&sampled), &[2.0]))
    });
}

criterion_group!(benches, integrators, conditions);
criterion_main!(benches);
