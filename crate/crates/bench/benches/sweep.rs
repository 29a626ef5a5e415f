use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use dampplan_core::dq::{FrequencyGrid, OMEGA0_50HZ};
use dampplan_core::fixture::reference_network;
use dampplan_core::stability::{analyze, sweep, track, CrossoverOptions, MatrixSource};
use dampplan_core::{eig_lr, PreparedNetwork};

fn benches(c: &mut Criterion) {
    let net = PreparedNetwork::new(&reference_network()).unwrap();
    let grid = FrequencyGrid::linear(10.0, 2500.0, 1.0, OMEGA0_50HZ).unwrap();
    let m = net.matrix(179.0).unwrap();

    c.bench_function("assemble_8x8", |b| b.iter(|| net.matrix(black_box(179.0)).unwrap()));
    c.bench_function("eig_lr_8x8", |b| b.iter(|| eig_lr(black_box(&m)).unwrap()));

    let mut g = c.benchmark_group("fixture");
    g.sample_size(10);
    g.bench_function("sweep_track_2491", |b| b.iter(|| track(&sweep(&net, &grid).unwrap())));
    g.bench_function("analyze_2491", |b| {
        b.iter(|| analyze(&net, &grid, &CrossoverOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(all, benches);
criterion_main!(all);
