use criterion::{black_box, criterion_group, criterion_main, Criterion};

use ostl::dataset::farthest_point_sampling;
use ostl::eval::predict;
use ostl::ltlme::{propagate, TimeGrid};
use ostl::{SimulationPoint, SystemSpec};
use ostl_bench::{cube_points, paper_model};

fn one_shot(c: &mut Criterion) {
    let model = paper_model(0);
    let x = [1.0, 0.5, 0.5, 0.5];
    let p = SimulationPoint::new(1, 160.0, 150.0, 170.0).unwrap();
    c.bench_function("forward_39249", |b| b.iter(|| model.forward(black_box(&x)).unwrap()));
    c.bench_function("predict_801_steps", |b| b.iter(|| predict(&model, black_box(&p)).unwrap()));
}

fn reference(c: &mut Criterion) {
    let sys = SystemSpec::fmo();
    let p = SimulationPoint::new(0, 160.0, 150.0, 170.0).unwrap();
    let grid = TimeGrid::paper();
    let mut g = c.benchmark_group("ltlme");
    g.sample_size(10);
    g.bench_function("propagate_fmo_801_steps", |b| b.iter(|| propagate(&sys, black_box(&p), &grid).unwrap()));
    g.finish();
}

fn fps(c: &mut Criterion) {
    let pts = cube_points(12);
    c.bench_function("fps_500_of_1728", |b| {
        b.iter(|| farthest_point_sampling(black_box(&pts), 500, 0).unwrap())
    });
}

criterion_group!(benches, one_shot, reference, fps);
criterion_main!(benches);
