use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;

use sdspred::designer::{numeric_design, DesignProblem};
use sdspred::partition::{discretize, DiscretizeMethod};
use sdspred::rng;
use sdspred::{GridPartition, NoiseModel, SystemModel};

fn correlated() -> NoiseModel {
    NoiseModel::gaussian(vec![0.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.8])).unwrap()
}

fn box_probability(c: &mut Criterion) {
    let m = correlated();
    let mut g = c.benchmark_group("box_probability");
    for budget in [1_000usize, 10_000] {
        g.bench_with_input(BenchmarkId::new("correlated", budget), &budget, |b, &n| {
            let mut r = rng::stream(7);
            b.iter(|| m.box_probability(black_box(&[0.3, -0.2]), 0.1, n, &mut r).unwrap())
        });
    }
    let diag = NoiseModel::standard_gaussian(2, 1.0).unwrap();
    g.bench_function("diagonal", |b| {
        let mut r = rng::stream(7);
        b.iter(|| diag.box_probability(black_box(&[0.3, -0.2]), 0.1, 0, &mut r).unwrap())
    });
    g.finish();
}

fn simulate(c: &mut Criterion) {
    let sys = SystemModel::linear(DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]), correlated()).unwrap();
    c.bench_function("simulate_k400", |b| b.iter(|| sys.simulate(&[0.0, 0.0], 400, black_box(3)).unwrap()));
}

fn partition(c: &mut Criterion) {
    let m = correlated();
    let grid = GridPartition::for_model(&m, 0.1).unwrap();
    c.bench_function("label", |b| b.iter(|| grid.label(black_box(&[0.123, -1.7])).unwrap()));
    c.bench_function("discretize_correlated_2d", |b| {
        b.iter(|| discretize(&m, &grid, DiscretizeMethod::Analytic).unwrap())
    });
}

fn design(c: &mut Criterion) {
    let p = DesignProblem::new(1.0).with_cap(3.0);
    c.bench_function("numeric_design_10k", |b| b.iter(|| numeric_design(black_box(&p)).unwrap()));
}

criterion_group!(benches, box_probability, simulate, partition, design);
criterion_main!(benches);
