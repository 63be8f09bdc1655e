//! End-to-end acceptance criteria. Runs every criterion, prints one verdict line
//! each, and exits non-zero if any criterion fails.

use std::io::Write;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::SVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terranav::camera::{depth_from_plane, l_operator, projection_operator};
use terranav::dtm::{SurfaceContact, TerrainGrid};
use terranav::ekf::{
    measurement_matrix, measurement_update, time_update, transition, assemble_phi, covariance_health, process_noise,
    Matrix15, Matrix6,
};
use terranav::pose_solver::{jacobian_fd, jacobian_rank};
use terranav::sim::config::{CouplingSpec, TerrainKind};
use terranav::sim::{self, report, ScenarioConfig, SolveSetup};
use terranav::{
    dcm_b_to_l, BiasCoupling, Covariance15, ErrorState, ErrorStateFilter, ImagePoint, Measurement, NoiseConfig, Pose,
    Vec3,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit(r: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_rotation(r: &mut ChaCha8Rng) -> nalgebra::Matrix3<f64> {
    dcm_b_to_l(
        r.random_range(-3.1..3.1),
        r.random_range(-1.5..1.5),
        r.random_range(-3.1..3.1),
    )
}

fn operator_identities() -> Verdict {
    let mut r = rng(1);
    let (mut worst_annihilate, mut worst_idempotent, mut worst_complement) = (0.0f64, 0.0f64, 0.0f64);
    let mut cases = 0;
    while cases < 10_000 {
        let u = unit(&mut r) * r.random_range(0.1..10.0);
        let s = unit(&mut r) * r.random_range(0.1..10.0);
        if s.dot(&u).abs() < 0.1 * s.norm() * u.norm() {
            continue;
        }
        let p = projection_operator(&u, &s).unwrap();
        worst_annihilate = worst_annihilate
            .max((p * u).norm() / u.norm())
            .max((s.transpose() * p).norm() / s.norm());
        worst_idempotent = worst_idempotent.max((p * p - p).norm());

        let r1 = random_rotation(&mut r);
        let q1 = ImagePoint::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)).homogeneous();
        let n = unit(&mut r);
        let ray = r1 * q1.vector();
        if n.dot(&ray).abs() < 0.1 * ray.norm() {
            continue;
        }
        let l = l_operator(&q1, &n, &r1).unwrap();
        let complement = projection_operator(&ray, &n).unwrap();
        worst_complement = worst_complement.max((r1 * l + complement - nalgebra::Matrix3::identity()).norm());
        cases += 1;
    }
    verdict(
        worst_annihilate <= 1e-12 && worst_idempotent <= 1e-10 && worst_complement <= 1e-10,
        format!(
            "{cases} cases; max |Pu|,|s'P| {worst_annihilate:.1e}, |P^2-P| {worst_idempotent:.1e}, |R1 L + P - I| {worst_complement:.1e}"
        ),
    )
}

fn tangent_plane_consistency() -> Verdict {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 1_000 {
        let contact = SurfaceContact {
            point: Vec3::new(r.random_range(-50.0..50.0), r.random_range(-50.0..50.0), r.random_range(-10.0..10.0)),
            normal: (Vec3::z() + unit(&mut r) * r.random_range(0.0..0.5)).normalize(),
        };
        let pose = Pose::new(
            Vec3::new(r.random_range(-50.0..50.0), r.random_range(-50.0..50.0), r.random_range(80.0..120.0)),
            dcm_b_to_l(
                std::f64::consts::PI + r.random_range(-0.3..0.3),
                r.random_range(-0.3..0.3),
                r.random_range(-3.1..3.1),
            ),
        );
        let q1 = ImagePoint::new(r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)).homogeneous();
        let ray = pose.rotation * q1.vector();
        if contact.normal.dot(&ray).abs() < 0.1 * ray.norm() {
            continue;
        }
        let depth = depth_from_plane(&pose, &q1, &contact).unwrap();
        if depth <= 0.0 {
            continue;
        }
        let g = pose.position + ray * depth;
        worst = worst.max(contact.normal.dot(&(g - contact.point)).abs());
        cases += 1;
    }
    verdict(worst <= 1e-9, format!("{cases} configurations; max |N'(G - G_E)| {worst:.1e}"))
}

fn scenario_config(kind: TerrainKind) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.terrain.kind = kind;
    cfg.terrain.slope = 0.02;
    cfg
}

/// (rank with 6 features, rank with 7 features) at the true parameters.
fn ranks(cfg: &ScenarioConfig, grid: &TerrainGrid, seed: u64) -> (usize, usize) {
    let setup = SolveSetup {
        n_features: 7,
        pixel_noise: 0.0,
        perturb_pos: 0.0,
        perturb_att: 0.0,
    };
    let scenario = sim::solve_scenario(cfg, grid, &setup, seed, None).unwrap();
    let solver = cfg.solver_config();
    let rank = |n| {
        let jac = jacobian_fd(&scenario.truth, &scenario.flow.truncated(n), grid, solver.fd_step).unwrap();
        jacobian_rank(&jac, solver.rank_tolerance).rank
    };
    (rank(6), rank(7))
}

fn rank_law() -> Verdict {
    let mut six_singular = [0, 0];
    let mut seven_full = [0, 0];
    for (k, kind) in [TerrainKind::Inclined, TerrainKind::Rolling].into_iter().enumerate() {
        let cfg = scenario_config(kind);
        let grid = sim::synth_terrain(&cfg.terrain).unwrap();
        for seed in 0..50 {
            let (r6, r7) = ranks(&cfg, &grid, 1000 + seed);
            six_singular[k] += (r6 <= 11) as usize;
            seven_full[k] += (r7 == 12) as usize;
        }
    }
    let six: usize = six_singular.iter().sum();
    let seven: usize = seven_full.iter().sum();
    verdict(
        six >= 99 && seven == 100,
        format!(
            "6 features rank <= 11 in {six}/100, 7 features rank 12 in {seven}/100 \
             (planar {}/50, rolling {}/50)",
            seven_full[0], seven_full[1]
        ),
    )
}

struct RecoveryStats {
    passed: usize,
    degenerate: usize,
    worst_pos: f64,
    worst_att: f64,
    max_iterations: usize,
}

fn exact_recovery_on(kind: TerrainKind) -> RecoveryStats {
    let mut cfg = scenario_config(kind);
    cfg.trajectory.start[2] = 100.0;
    let grid = sim::synth_terrain(&cfg.terrain).unwrap();
    let setup = SolveSetup {
        n_features: 10,
        pixel_noise: 0.0,
        perturb_pos: 5.0,
        perturb_att: 1f64.to_radians(),
    };
    let mut stats = RecoveryStats {
        passed: 0,
        degenerate: 0,
        worst_pos: 0.0,
        worst_att: 0.0,
        max_iterations: 0,
    };
    for seed in 0..100 {
        match sim::single_solve(&cfg, &grid, &setup, 2000 + seed, None) {
            Ok(trial) => {
                let est = &trial.estimate;
                stats.worst_pos = stats.worst_pos.max(trial.position_error);
                stats.worst_att = stats.worst_att.max(trial.attitude_error);
                stats.max_iterations = stats.max_iterations.max(est.iterations);
                if est.converged && trial.position_error <= 1e-6 && trial.attitude_error <= 1e-8 {
                    stats.passed += 1;
                }
            }
            Err(_) => stats.degenerate += 1,
        }
    }
    stats
}

fn exact_recovery() -> Verdict {
    let planar = exact_recovery_on(TerrainKind::Flat);
    let rolling = exact_recovery_on(TerrainKind::Rolling);
    verdict(
        planar.passed == 100,
        format!(
            "planar: {}/100 recovered, {} rejected as degenerate; \
             rolling (supplementary): {}/100 recovered, max errors {:.1e} m / {:.1e} rad, max {} iterations",
            planar.passed, planar.degenerate, rolling.passed, rolling.worst_pos, rolling.worst_att, rolling.max_iterations
        ),
    )
}

fn noisy_rms(cfg: &ScenarioConfig, grid: &TerrainGrid, n_features: usize) -> (f64, usize, usize) {
    let setup = SolveSetup {
        n_features,
        pixel_noise: 1e-3,
        ..SolveSetup::from_solve(cfg)
    };
    let (mut sum_sq, mut ok, mut converged) = (0.0, 0, 0);
    for seed in 0..200 {
        if let Ok(trial) = sim::single_solve(cfg, grid, &setup, 3000 + seed, None) {
            sum_sq += trial.position_error.powi(2);
            ok += 1;
            converged += trial.estimate.converged as usize;
        }
    }
    ((sum_sq / ok.max(1) as f64).sqrt(), ok, converged)
}

fn block_traces(m: &Matrix6) -> (f64, f64) {
    let d = m.diagonal();
    (d[0] + d[1] + d[2], d[3] + d[4] + d[5])
}

fn noisy_scatter() -> Verdict {
    let cfg = ScenarioConfig::default();
    let grid = sim::synth_terrain(&cfg.terrain).unwrap();
    let (rms, ok, converged) = noisy_rms(&cfg, &grid, cfg.vision.n_features);

    let calibrate = |sigma: f64| {
        let mut c = cfg.clone();
        c.vision.pixel_noise = sigma;
        sim::calibrate_r(&c, &grid, 200)
    };
    let scaling = match (calibrate(1e-3), calibrate(2e-3)) {
        (Ok(a), Ok(b)) => {
            let psd = |m: &Matrix6| m == &m.transpose() && m.symmetric_eigenvalues().min() >= -1e-12 * m.trace();
            let (pa, aa) = block_traces(&a.covariance);
            let (pb, ab) = block_traces(&b.covariance);
            let (pos_ratio, att_ratio) = (pb / pa, ab / aa);
            let within = |x: f64| (x / 4.0 - 1.0).abs() <= 0.3;
            (
                psd(&a.covariance) && psd(&b.covariance) && within(pos_ratio) && within(att_ratio),
                format!("2x noise scales position block by {pos_ratio:.2}, attitude block by {att_ratio:.2}"),
            )
        }
        (a, b) => (
            false,
            format!("calibration failed: {:?} / {:?}", a.err(), b.err()),
        ),
    };
    let (rms_many, _, _) = noisy_rms(&cfg, &grid, 100);
    verdict(
        rms <= 1.0 && ok == 200 && scaling.0,
        format!(
            "{} features: position RMS {rms:.2} m over {ok}/200 solves ({converged} converged); {}; \
             100 features (supplementary): RMS {rms_many:.2} m",
            cfg.vision.n_features, scaling.1
        ),
    )
}

fn ekf_algebra() -> Verdict {
    let mut r = rng(6);
    let mut zeroed = true;
    for _ in 0..1000 {
        let x = ErrorState(SVector::from_fn(|_, _| r.random_range(-10.0..10.0)));
        let a = Matrix15::from_fn(|_, _| r.random_range(-1.0..1.0));
        let (xp, _) = time_update(&x, &Covariance15::identity(), &a, &Matrix15::zeros());
        zeroed &= xp.0.fixed_rows::<9>(0).iter().all(|v| *v == 0.0);
    }

    let mut worst_eig = f64::INFINITY;
    let mut worst_asym = 0.0f64;
    for coupling in [BiasCoupling::Crossed, BiasCoupling::Conventional] {
        let mut f = ErrorStateFilter::new(Covariance15::identity(), NoiseConfig::default(), coupling);
        for step in 0..1000 {
            if step % 2 == 0 {
                let force = Vec3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(7.0..12.0));
                let dcm = random_rotation(&mut r);
                f.predict(&force, &dcm, r.random_range(0.001..0.1));
            } else {
                let z = Measurement(SVector::from_fn(|_, _| r.random_range(-2.0..2.0)));
                f.update(&z).unwrap();
            }
            let (eig, asym) = covariance_health(&f.covariance);
            worst_eig = worst_eig.min(eig / f.covariance.trace());
            worst_asym = worst_asym.max(asym);
        }
    }

    let mut worst_joseph = 0.0f64;
    let mut zero_innovation_fixed = true;
    for _ in 0..1000 {
        let m = Matrix15::from_fn(|_, _| r.random_range(-1.0..1.0));
        let a = transition(&assemble_phi(&unit(&mut r), &random_rotation(&mut r), BiasCoupling::Crossed), 0.01);
        let p = a * (m * m.transpose() + Matrix15::identity() * 1e-3) * a.transpose() + process_noise(&NoiseConfig::default(), 0.01);
        let noise = Matrix6::from_diagonal(&SVector::from_fn(|_, _| r.random_range(0.01..2.0)));
        let x = ErrorState(SVector::from_fn(|_, _| r.random_range(-1.0..1.0)));
        let z = Measurement(measurement_matrix() * x.0);
        let out = measurement_update(&x, &p, &z, &noise).unwrap();
        let short = (Matrix15::identity() - out.gain * measurement_matrix()) * p;
        worst_joseph = worst_joseph.max((out.covariance - short).abs().max() / p.abs().max());
        zero_innovation_fixed &= out.state == x;
    }
    verdict(
        zeroed && worst_eig >= -1e-9 && worst_asym <= 1e-12 && worst_joseph <= 1e-9 && zero_innovation_fixed,
        format!(
            "reset {zeroed}; min eigenvalue/trace {worst_eig:.1e}, asymmetry {worst_asym:.1e}; \
             Joseph vs short form {worst_joseph:.1e}; zero innovation keeps state {zero_innovation_fixed}"
        ),
    )
}

fn at(times: &[f64], t: f64) -> usize {
    times.iter().position(|s| *s >= t - 1e-9).unwrap()
}

fn end_to_end_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.filter.coupling = CouplingSpec::Conventional;
    cfg
}

fn bounded_error() -> Verdict {
    let cfg = end_to_end_config();
    let grid = sim::synth_terrain(&cfg.terrain).unwrap();
    let cal = match sim::calibrate_r(&cfg, &grid, 200) {
        Ok(c) => c,
        Err(e) => return verdict(false, format!("calibration failed: {e}")),
    };
    let mc = sim::monte_carlo(&cfg, &grid, Some(cal.covariance), 20).unwrap();
    let end = mc.times.len() - 1;
    let drift_final = mc.rms_drift_pos[end];
    let quarter = at(&mc.times, 0.75 * cfg.duration);
    let per_second = cfg.imu.rate as usize;
    let growing = (quarter..=end)
        .step_by(per_second)
        .zip((quarter + per_second..=end).step_by(per_second))
        .all(|(a, b)| mc.rms_drift_pos[b] > mc.rms_drift_pos[a]);
    let max_corrected = mc.rms_corrected_pos[at(&mc.times, 20.0)..]
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    let corrected_final = mc.rms_corrected_pos[end];
    let vel_ratio = mc.rms_corrected_vel[end] / mc.rms_drift_vel[end];
    let a = drift_final >= 10.0 && growing;
    let b = max_corrected <= 3.0 && corrected_final <= 0.1 * drift_final;
    let c = vel_ratio <= 0.25;
    verdict(
        a && b && c,
        format!(
            "(a) drift final {drift_final:.1} m, growing over last quarter {growing}; \
             (b) corrected max over [20, 100] s {max_corrected:.2} m, final {corrected_final:.2} m; \
             (c) velocity ratio {vel_ratio:.4}; vision convergence {:.2}",
            mc.convergence_rate()
        ),
    )
}

fn csv_bytes() -> (Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>) {
    let mut cfg = end_to_end_config();
    cfg.seed = 8;
    let grid = sim::synth_terrain(&cfg.terrain).unwrap();
    let record = sim::run_episode(&cfg).unwrap();
    let (mut episode, mut vision, mut mc, mut matrix) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    report::write_episode(&mut episode, &record).unwrap();
    report::write_vision(&mut vision, &record).unwrap();
    let mut short = cfg.clone();
    short.duration = 20.0;
    report::write_monte_carlo(&mut mc, &sim::monte_carlo(&short, &grid, None, 4).unwrap()).unwrap();
    report::write_matrix6(&mut matrix, &sim::calibrate_r(&cfg, &grid, 50).unwrap().covariance).unwrap();
    (episode, vision, mc, matrix)
}

fn determinism() -> Verdict {
    let first = csv_bytes();
    let second = csv_bytes();
    let sizes = [first.0.len(), first.1.len(), first.2.len(), first.3.len()];
    verdict(
        first == second,
        format!("episode, vision, mc and matrix CSVs ({sizes:?} bytes) identical on rerun: {}", first == second),
    )
}

type Criterion = (&'static str, fn() -> Verdict, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("operator identities", operator_identities, Duration::from_secs(1)),
        ("tangent-plane consistency", tangent_plane_consistency, Duration::from_secs(1)),
        ("rank law", rank_law, Duration::from_secs(30)),
        ("exact recovery", exact_recovery, Duration::from_secs(60)),
        ("noisy-solver scatter", noisy_scatter, Duration::from_secs(300)),
        ("EKF algebra", ekf_algebra, Duration::from_secs(10)),
        ("end-to-end bounded error", bounded_error, Duration::from_secs(600)),
        ("determinism", determinism, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = run();
        let elapsed = start.elapsed();
        let pass = v.pass && elapsed <= *budget;
        failed += !pass as usize;
        println!(
            "criterion {} {name}: {} | {} | {:.2} s (budget {} s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        std::io::stdout().flush().ok();
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
