use criterion::{criterion_group, criterion_main, Criterion};

use hiersim::experiment::{run_experiment, sweep_points, SweepAxis};
use hiersim::{par, SimConfig};

fn batch() -> Vec<(String, SimConfig)> {
    let tmpl = SimConfig::default().with_kernel("jacobi", &[("iters", 2)]);
    let axes = [
        SweepAxis::Levels(vec![vec![1], vec![1, 2]]),
        SweepAxis::Workers(vec![4, 8, 16, 32]),
    ];
    sweep_points(&tmpl, &axes)
}

fn run(point: (String, SimConfig)) -> u64 {
    run_experiment(&point.1).expect("bench config runs").report.makespan
}

fn compare(c: &mut Criterion) {
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    g.bench_function("sequential", |b| b.iter(|| par::map_sequential(batch(), run)));
    g.bench_function("parallel", |b| b.iter(|| par::map(batch(), run)));
    g.finish();
}

criterion_group!(benches, compare);
criterion_main!(benches);
