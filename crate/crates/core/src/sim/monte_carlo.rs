use nalgebra::SVector;
use rand::Rng;
use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::episode::{rng_for, run_episode_on, stream};
use super::flow::synth_flow;
use super::trajectory::Trajectory;
use super::CameraMount;
use crate::attitude::rotation_angle_between;
use crate::dtm::TerrainGrid;
use crate::ekf::{compose_measurement, Matrix6};
use crate::error::{NavError, Result};
use crate::ins::NavState;
use crate::pose_solver::{solve, FlowField, ParameterVector, PoseMotionEstimate};

/// One standalone pose solve against a known truth.
#[derive(Debug, Clone)]
pub struct SolveTrial {
    pub t: f64,
    pub truth: ParameterVector,
    pub initial: ParameterVector,
    pub flow: FlowField,
    pub estimate: PoseMotionEstimate,
    /// m
    pub position_error: f64,
    /// rad
    pub attitude_error: f64,
    /// m
    pub translation_error: f64,
    /// rad
    pub rotation_error: f64,
    /// Body pose fix minus truth at the second epoch.
    pub measurement_error: Option<SVector<f64, 6>>,
}

/// Flow and initial-guess settings of a standalone solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSetup {
    pub n_features: usize,
    pub pixel_noise: f64,
    /// m, added with random sign to every position component.
    pub perturb_pos: f64,
    /// rad, added with random sign to every Euler angle.
    pub perturb_att: f64,
}

impl SolveSetup {
    /// The `[solve]` section of the scenario.
    pub fn from_solve(cfg: &ScenarioConfig) -> Self {
        Self {
            n_features: cfg.solve.n_features,
            pixel_noise: cfg.solve.pixel_noise,
            perturb_pos: cfg.solve.perturb_pos,
            perturb_att: cfg.solve.perturb_att,
        }
    }

    /// Flow settings of the closed-loop vision epochs, perturbation from `[solve]`.
    pub fn from_vision(cfg: &ScenarioConfig) -> Self {
        Self {
            n_features: cfg.vision.n_features,
            pixel_noise: cfg.vision.pixel_noise,
            ..Self::from_solve(cfg)
        }
    }
}

/// Truth, synthesized flow and perturbed initial guess for one standalone solve.
#[derive(Debug, Clone)]
pub struct SolveScenario {
    pub t: f64,
    pub truth: ParameterVector,
    pub initial: ParameterVector,
    pub flow: FlowField,
    /// Vehicle state at the second epoch.
    pub truth2: NavState,
}

/// Builds the pose problem between two consecutive vision epochs of the scenario
/// trajectory, starting `t` seconds in (drawn from `seed` when `None`).
pub fn solve_scenario(
    cfg: &ScenarioConfig,
    grid: &TerrainGrid,
    setup: &SolveSetup,
    seed: u64,
    t: Option<f64>,
) -> Result<SolveScenario> {
    let mut rng = rng_for(seed, stream::SOLVE);
    let trajectory = Trajectory::new(&cfg.trajectory);
    let mount = CameraMount::from_config(cfg);
    let interval = 1.0 / cfg.vision.rate;
    let t = t.unwrap_or_else(|| rng.random_range(0.0..(cfg.duration - interval).max(f64::MIN_POSITIVE)));
    let truth2 = trajectory.sample(t + interval).nav_state();
    let cam1 = mount.camera_pose(&trajectory.sample(t).nav_state());
    let motion = cam1.motion_to(&mount.camera_pose(&truth2));
    let truth = ParameterVector::from_pose_motion(&cam1, &motion)?;
    let flow = synth_flow(
        &cam1,
        &motion,
        grid,
        setup.n_features,
        setup.pixel_noise,
        cfg.vision.fov_half_width,
        &mut rng,
    )?;
    let mut initial = truth;
    for i in 0..12 {
        let size = if (i / 3) % 2 == 0 { setup.perturb_pos } else { setup.perturb_att };
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        initial.0[i] += sign * size;
    }
    Ok(SolveScenario {
        t,
        truth,
        initial,
        flow,
        truth2,
    })
}

/// [`solve_scenario`] followed by a solve and error evaluation.
pub fn single_solve(
    cfg: &ScenarioConfig,
    grid: &TerrainGrid,
    setup: &SolveSetup,
    seed: u64,
    t: Option<f64>,
) -> Result<SolveTrial> {
    let scenario = solve_scenario(cfg, grid, setup, seed, t)?;
    let estimate = solve(&scenario.initial, &scenario.flow, grid, &cfg.solver_config())?;
    let mount = CameraMount::from_config(cfg);
    let body2 = mount.body_pose(&estimate.pose2());
    let (pose1, motion) = (scenario.truth.pose1(), scenario.truth.motion());
    Ok(SolveTrial {
        position_error: (estimate.pose1.position - pose1.position).norm(),
        attitude_error: rotation_angle_between(&estimate.pose1.rotation, &pose1.rotation),
        translation_error: (estimate.motion.translation - motion.translation).norm(),
        rotation_error: rotation_angle_between(&estimate.motion.rotation, &motion.rotation),
        measurement_error: compose_measurement(&body2, &scenario.truth2).ok().map(|z| z.0),
        t: scenario.t,
        truth: scenario.truth,
        initial: scenario.initial,
        flow: scenario.flow,
        estimate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// Sample covariance of the fix errors.
    pub covariance: Matrix6,
    pub mean: SVector<f64, 6>,
    pub samples: usize,
    pub failures: usize,
}

/// Maximum fraction of failed solves tolerated by [`calibrate_r`].
pub const MAX_CALIBRATION_FAILURE_RATE: f64 = 0.2;

fn sample_covariance(samples: &[SVector<f64, 6>]) -> (SVector<f64, 6>, Matrix6) {
    let n = samples.len() as f64;
    let mean = samples.iter().fold(SVector::<f64, 6>::zeros(), |acc, e| acc + e) / n;
    let mut cov = Matrix6::zeros();
    for e in samples {
        let d = e - mean;
        cov += d * d.transpose();
    }
    (mean, cov / (n - 1.0).max(1.0))
}

/// Estimates the vision measurement covariance from `n_runs` independent solves
/// with seeds `cfg.seed + i`, using the vision flow settings.
pub fn calibrate_r(cfg: &ScenarioConfig, grid: &TerrainGrid, n_runs: usize) -> Result<CalibrationResult> {
    let setup = SolveSetup::from_vision(cfg);
    let outcomes: Vec<Option<SVector<f64, 6>>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| match single_solve(cfg, grid, &setup, cfg.seed.wrapping_add(i), None) {
            Ok(trial) if trial.estimate.converged => trial.measurement_error,
            Ok(_) => None,
            Err(e) => {
                log::warn!("calibration run {i} failed: {e}");
                None
            }
        })
        .collect();
    let samples: Vec<_> = outcomes.iter().flatten().copied().collect();
    let failures = n_runs - samples.len();
    if samples.len() < 2 || failures as f64 > MAX_CALIBRATION_FAILURE_RATE * n_runs as f64 {
        return Err(NavError::Scenario(format!(
            "calibration failed: {failures} of {n_runs} solves did not converge"
        )));
    }
    let (mean, covariance) = sample_covariance(&samples);
    Ok(CalibrationResult {
        covariance,
        mean,
        samples: samples.len(),
        failures,
    })
}

/// Ensemble statistics over independent closed-loop episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub times: Vec<f64>,
    pub rms_drift_pos: Vec<f64>,
    pub rms_corrected_pos: Vec<f64>,
    pub rms_drift_vel: Vec<f64>,
    pub rms_corrected_vel: Vec<f64>,
    pub vision_attempts: usize,
    pub vision_converged: usize,
    pub vision_used: usize,
    /// Empirical covariance of the vision fix errors across all runs.
    pub measurement_error_covariance: Matrix6,
    pub measurement_error_samples: usize,
}

impl MonteCarloSummary {
    pub fn convergence_rate(&self) -> f64 {
        self.vision_converged as f64 / self.vision_attempts.max(1) as f64
    }
}

fn rms(sum_sq: &[f64], n: usize) -> Vec<f64> {
    sum_sq.iter().map(|s| (s / n as f64).sqrt()).collect()
}

/// Runs `n_runs` episodes with seeds `cfg.seed + i` in parallel. Results do not
/// depend on the thread count.
pub fn monte_carlo(cfg: &ScenarioConfig, grid: &TerrainGrid, r_override: Option<Matrix6>, n_runs: usize) -> Result<MonteCarloSummary> {
    if n_runs == 0 {
        return Err(NavError::Scenario("at least one run is required".into()));
    }
    let runs: Vec<_> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = cfg.seed.wrapping_add(i);
            let record = run_episode_on(&run_cfg, grid, r_override)?;
            let errors: Vec<SVector<f64, 6>> = record.vision.iter().filter_map(|v| v.vision_error).collect();
            let converged = record.vision.iter().filter(|v| v.converged).count();
            let used = record.vision.iter().filter(|v| v.used).count();
            Ok((record.error_series(), record.vision.len(), converged, used, errors))
        })
        .collect::<Result<_>>()?;

    let times = runs[0].0.times.clone();
    let n = times.len();
    let mut acc = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let (mut attempts, mut converged, mut used) = (0, 0, 0);
    let mut errors = Vec::new();
    for (series, a, c, u, e) in runs {
        for (sum, values) in acc.iter_mut().zip([
            &series.drift_pos,
            &series.corrected_pos,
            &series.drift_vel,
            &series.corrected_vel,
        ]) {
            for (s, v) in sum.iter_mut().zip(values) {
                *s += v * v;
            }
        }
        attempts += a;
        converged += c;
        used += u;
        errors.extend(e);
    }
    let (_, cov) = if errors.len() >= 2 {
        sample_covariance(&errors)
    } else {
        (SVector::zeros(), Matrix6::zeros())
    };
    Ok(MonteCarloSummary {
        runs: n_runs,
        times,
        rms_drift_pos: rms(&acc[0], n_runs),
        rms_corrected_pos: rms(&acc[1], n_runs),
        rms_drift_vel: rms(&acc[2], n_runs),
        rms_corrected_vel: rms(&acc[3], n_runs),
        vision_attempts: attempts,
        vision_converged: converged,
        vision_used: used,
        measurement_error_covariance: cov,
        measurement_error_samples: errors.len(),
    })
}
