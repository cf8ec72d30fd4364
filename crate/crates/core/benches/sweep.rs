use criterion::{criterion_group, criterion_main, Criterion};
use nanocavity::cavity::{default_sweep_grid, peak_reflectivity, CavityCoupling, SlabGeometry};
use nanocavity::par;
use std::hint::black_box;

fn sweep(c: &mut Criterion) {
    let geometry = SlabGeometry::default();
    let template = CavityCoupling::new(1370.0, 1e4, 1e4, 1e8).unwrap();
    let grid = default_sweep_grid();
    let point = |l: &f64| peak_reflectivity(&geometry, &template, *l).unwrap();

    let mut group = c.benchmark_group("peak_reflectivity_sweep_341");
    group.sample_size(10);
    group.bench_function("rayon", |b| b.iter(|| black_box(par::map(&grid, point))));
    group.bench_function("sequential", |b| b.iter(|| black_box(par::map_sequential(&grid, point))));
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
