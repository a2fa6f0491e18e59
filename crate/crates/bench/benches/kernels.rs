use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ecpnn_core::oracle::numerov_ground_state;
use ecpnn_core::trainer::{loss_and_gradient, sample_points};
use ecpnn_core::{
    amplitude, kinetic_ratio, make_hydrogenic, PotentialModel, RadialGrid, ReferencePotential,
    SplineField, TrainConfig,
};

fn forward_backward(c: &mut Criterion) {
    let model = PotentialModel::init(0);
    let mut group = c.benchmark_group("network");
    for b in [1usize, 64, 256] {
        let rs = sample_points([0.1, 10.0], b, 1);
        group.bench_with_input(BenchmarkId::new("forward_batch", b), &rs, |bench, rs| {
            bench.iter(|| model.forward_batch(black_box(rs)).unwrap())
        });
        let tape = model.forward_batch(&rs).unwrap();
        let ones = vec![1.0; b];
        group.bench_with_input(BenchmarkId::new("backward", b), &tape, |bench, tape| {
            bench.iter(|| model.backward(black_box(tape), &ones, &ones).unwrap())
        });
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let grid = RadialGrid::uniform(0.05, 11.0, 2000).unwrap();
    let density = make_hydrogenic(1.0, &grid).unwrap();
    let q = kinetic_ratio(&amplitude(&density, 1.0).unwrap()).unwrap();
    let cfg = TrainConfig::default();
    let batch = sample_points(cfg.domain, cfg.batch_size, 2);
    let slopes: Vec<f64> = batch.iter().map(|&r| q.slope(r).unwrap()).collect();
    let model = PotentialModel::init(0);
    c.bench_function("loss_and_gradient/256", |b| {
        b.iter(|| loss_and_gradient(&model, black_box(&batch), &slopes, &cfg).unwrap())
    });
}

fn spline(c: &mut Criterion) {
    let grid = RadialGrid::uniform(0.05, 11.0, 2000).unwrap();
    let values: Vec<f64> = grid.points().iter().map(|r| (-r).exp()).collect();
    c.bench_function("spline_fit/2000", |b| {
        b.iter(|| SplineField::fit(&grid, black_box(&values)).unwrap())
    });
    let density = make_hydrogenic(1.0, &grid).unwrap();
    let amp = amplitude(&density, 1.0).unwrap();
    c.bench_function("kinetic_ratio/2000", |b| {
        b.iter(|| kinetic_ratio(black_box(&amp)).unwrap())
    });
}

fn numerov(c: &mut Criterion) {
    let grid = RadialGrid::uniform(1e-4, 40.0, 4000).unwrap();
    let pot = ReferencePotential::Coulomb { z: 1.0 };
    c.bench_function("numerov_ground_state/4000", |b| {
        b.iter(|| numerov_ground_state(black_box(&pot), &grid).unwrap())
    });
}

criterion_group!(benches, forward_backward, training_step, spline, numerov);
criterion_main!(benches);
