use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use dsm_bench::{period_map, random_state};
use dsm_core::husimi::husimi;
use dsm_core::quantum::{apply_kick, damping_channel};
use dsm_core::ulam::build_ulam_matrix;
use dsm_core::{DampingMethod, GridSpec, MapParams, UlamGrid, UlamSampling};

// hbar = 0.1 keeps a single iteration in the millisecond range; the desk
// scale 0.042 is about 20x slower per apply.
const HBAR: f64 = 0.1;

fn channels(c: &mut Criterion) {
    let map = period_map(5.13, HBAR);
    let rho = random_state(&map, 1);
    let mut group = c.benchmark_group("channels");
    group.bench_function("kick", |b| {
        b.iter(|| apply_kick(black_box(&rho), &map.space, &map.params))
    });
    group.bench_function("damping_exact", |b| {
        b.iter(|| damping_channel(black_box(&rho), &map.space, &map.params, DampingMethod::Exact))
    });
    group.bench_function("damping_rk4", |b| {
        b.iter(|| {
            damping_channel(black_box(&rho), &map.space, &map.params, DampingMethod::Rk4 { n_sub: 32 })
        })
    });
    group.bench_function("period_map", |b| {
        let mut data = rho.data.clone();
        b.iter(|| map.apply_in_place(black_box(&mut data)))
    });
    group.finish();
}

fn ulam(c: &mut Criterion) {
    let params = MapParams::new(6.86, 0.33, HBAR).unwrap();
    let mut group = c.benchmark_group("ulam_build");
    group.sample_size(10);
    for n in [100, 200] {
        let grid = UlamGrid::for_params(&params, n, n, 1.05).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, grid| {
            b.iter(|| build_ulam_matrix(&params, grid, &UlamSampling::default()).unwrap())
        });
    }
    group.finish();
}

fn husimi_grid(c: &mut Criterion) {
    let map = period_map(4.0, HBAR);
    let rho = random_state(&map, 2);
    let mut group = c.benchmark_group("husimi");
    group.sample_size(10);
    for n in [64, 128] {
        let spec = GridSpec { nx: n, np: n, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(n), &spec, |b, spec| {
            b.iter(|| husimi(black_box(&rho), &map.space, spec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, channels, ulam, husimi_grid);
criterion_main!(benches);
