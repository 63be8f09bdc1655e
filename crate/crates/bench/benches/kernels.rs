use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use terranav::ekf::{measurement_matrix, Covariance15, ErrorStateFilter, Measurement, NoiseConfig};
use terranav::pose_solver::{jacobian_fd, solve};
use terranav::sim::{solve_scenario, synth_terrain, ScenarioConfig, SolveSetup};
use terranav::{dcm_b_to_l, BiasCoupling, Vec3};

fn terrain(c: &mut Criterion) {
    let cfg = ScenarioConfig::default();
    let grid = synth_terrain(&cfg.terrain).unwrap();
    let origin = Vec3::new(-900.0, -300.0, 100.0);
    let dir = Vec3::new(0.3, -0.2, -1.0).normalize();
    c.bench_function("intersect_ray", |b| b.iter(|| grid.intersect_ray(black_box(origin), black_box(dir)).unwrap()));
}

fn pose_solver(c: &mut Criterion) {
    let cfg = ScenarioConfig::default();
    let grid = synth_terrain(&cfg.terrain).unwrap();
    let setup = SolveSetup::from_vision(&cfg);
    let scenario = solve_scenario(&cfg, &grid, &setup, 3, Some(10.0)).unwrap();
    let solver = cfg.solver_config();
    c.bench_function("jacobian_fd_10_features", |b| {
        b.iter(|| jacobian_fd(black_box(&scenario.initial), &scenario.flow, &grid, solver.fd_step).unwrap())
    });
    c.bench_function("solve_10_features", |b| {
        b.iter(|| solve(black_box(&scenario.initial), &scenario.flow, &grid, &solver).unwrap())
    });
}

fn filter(c: &mut Criterion) {
    let f = ErrorStateFilter::new(Covariance15::identity(), NoiseConfig::default(), BiasCoupling::Conventional);
    let force = Vec3::new(0.1, -0.2, 9.81);
    let dcm = dcm_b_to_l(0.02, -0.01, 0.7);
    c.bench_function("ekf_predict", |b| {
        b.iter_batched(|| f.clone(), |mut g| g.predict(black_box(&force), &dcm, 0.01), BatchSize::SmallInput)
    });
    let z = Measurement(measurement_matrix() * f.state.0);
    c.bench_function("ekf_update", |b| {
        b.iter_batched(|| f.clone(), |mut g| g.update(black_box(&z)).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, terrain, pose_solver, filter);
criterion_main!(benches);
