use nalgebra::SVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ScenarioConfig;
use super::flow::synth_flow;
use super::imu::{gaussian3, synth_imu};
use super::terrain::synth_terrain;
use super::trajectory::Trajectory;
use super::CameraMount;
use crate::attitude::{dcm_b_to_l, euler_of_unchecked};
use crate::dtm::TerrainGrid;
use crate::ekf::{compose_measurement, Covariance15, ErrorStateFilter, Matrix6};
use crate::error::{NavError, Result};
use crate::ins::{apply_corrections, propagate, specific_force, BiasState, ImuSample, NavState};
use crate::pose_solver::{solve, ParameterVector};

/// Independent random streams of one episode.
pub(crate) mod stream {
    pub const IMU: u64 = 1;
    pub const INITIAL: u64 = 2;
    pub const FLOW: u64 = 3;
    pub const SOLVE: u64 = 4;
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub truth: NavState,
    pub drift: NavState,
    pub corrected: NavState,
    pub p_diag: SVector<f64, 15>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisionRecord {
    pub t: f64,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    pub rank: usize,
    /// Whether the fix reached the filter.
    pub used: bool,
    pub innovation: Option<SVector<f64, 6>>,
    /// Vision fix minus truth, in measurement coordinates. Diagnostic only.
    pub vision_error: Option<SVector<f64, 6>>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRecord>,
    pub vision: Vec<VisionRecord>,
}

/// Per-step error norms of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub drift_pos: Vec<f64>,
    pub corrected_pos: Vec<f64>,
    pub drift_vel: Vec<f64>,
    pub corrected_vel: Vec<f64>,
}

impl EpisodeRecord {
    pub fn error_series(&self) -> ErrorSeries {
        let norm = |f: &dyn Fn(&StepRecord) -> f64| self.steps.iter().map(f).collect::<Vec<_>>();
        ErrorSeries {
            times: norm(&|s| s.t),
            drift_pos: norm(&|s| (s.drift.position - s.truth.position).norm()),
            corrected_pos: norm(&|s| (s.corrected.position - s.truth.position).norm()),
            drift_vel: norm(&|s| (s.drift.velocity - s.truth.velocity).norm()),
            corrected_vel: norm(&|s| (s.corrected.velocity - s.truth.velocity).norm()),
        }
    }

    pub fn final_step(&self) -> &StepRecord {
        self.steps.last().expect("episodes always record t = 0")
    }
}

fn initial_covariance(cfg: &ScenarioConfig) -> Covariance15 {
    let sigmas = [
        cfg.initial.sigma_pos,
        cfg.initial.sigma_vel,
        cfg.initial.sigma_att,
        cfg.filter.sigma_accel_bias,
        cfg.filter.sigma_gyro_bias,
    ];
    let mut diag = SVector::<f64, 15>::zeros();
    for (block, s) in sigmas.iter().enumerate() {
        for i in 0..3 {
            diag[3 * block + i] = s * s;
        }
    }
    Covariance15::from_diagonal(&diag)
}

/// Runs one closed-loop episode.
///
/// At every IMU sample the truth advances, the drift and corrected navigators
/// propagate the same measured increments, and the filter predicts. At every vision
/// epoch a flow field is synthesized between the previous and the current epoch,
/// the pose solver is seeded with the corrected navigator's poses, and the
/// resulting second-frame pose is fused. Failed solves are logged and skipped.
pub fn run_episode(cfg: &ScenarioConfig) -> Result<EpisodeRecord> {
    let grid = synth_terrain(&cfg.terrain)?;
    let r = match &cfg.filter.r_file {
        Some(path) => Some(
            super::report::load_matrix6(path).map_err(|e| NavError::Scenario(format!("{path}: {e}")))?,
        ),
        None => None,
    };
    run_episode_on(cfg, &grid, r)
}

/// [`run_episode`] on a prebuilt grid, optionally overriding the measurement
/// covariance.
pub fn run_episode_on(cfg: &ScenarioConfig, grid: &TerrainGrid, r_override: Option<Matrix6>) -> Result<EpisodeRecord> {
    let trajectory = Trajectory::new(&cfg.trajectory);
    let mount = CameraMount::from_config(cfg);
    let solver_cfg = cfg.solver_config();
    let n_steps = cfg.imu_steps();
    let per_vision = cfg.imu_steps_per_vision();
    let dt = 1.0 / cfg.imu.rate;
    let g = cfg.gravity;

    let imu = synth_imu(&trajectory, &cfg.imu, g, n_steps, &mut rng_for(cfg.seed, stream::IMU));

    let mut init_rng = rng_for(cfg.seed, stream::INITIAL);
    let truth0 = trajectory.sample(0.0).nav_state();
    let att_err = gaussian3(&mut init_rng, cfg.initial.sigma_att);
    let ins0 = NavState {
        position: truth0.position + gaussian3(&mut init_rng, cfg.initial.sigma_pos),
        velocity: truth0.velocity + gaussian3(&mut init_rng, cfg.initial.sigma_vel),
        attitude: euler_of_unchecked(&(dcm_b_to_l(att_err.x, att_err.y, att_err.z) * truth0.dcm())),
    };
    let mut flow_rng = rng_for(cfg.seed, stream::FLOW);

    let mut filter = ErrorStateFilter::new(initial_covariance(cfg), cfg.noise_config(), cfg.coupling());
    if let Some(r) = r_override {
        filter = filter.with_measurement_noise(r);
    }
    let mut drift = ins0;
    let mut corrected = ins0;
    let mut bias = BiasState::default();
    let no_bias = BiasState::default();
    let mut last_fix_state = corrected;
    let mut last_fix_time = 0.0;

    let mut steps = Vec::with_capacity(n_steps + 1);
    let mut vision = Vec::new();
    steps.push(StepRecord {
        t: 0.0,
        truth: truth0,
        drift,
        corrected,
        p_diag: filter.covariance.diagonal(),
    });

    for (k, sample) in imu.iter().enumerate() {
        let t = (k + 1) as f64 * dt;
        drift = propagate(&drift, sample, &no_bias, g);
        corrected = propagate(&corrected, sample, &bias, g);
        let compensated = ImuSample {
            d_velocity: sample.d_velocity - bias.accel * dt,
            ..*sample
        };
        let dcm = corrected.dcm();
        filter.predict(&specific_force(&dcm, &compensated), &dcm, dt);

        if (k + 1) % per_vision == 0 {
            let truth1 = trajectory.sample(last_fix_time);
            let truth2 = trajectory.sample(t);
            let cam1 = mount.camera_pose(&truth1.nav_state());
            let cam2 = mount.camera_pose(&truth2.nav_state());
            let flow = synth_flow(
                &cam1,
                &cam1.motion_to(&cam2),
                grid,
                cfg.vision.n_features,
                cfg.vision.pixel_noise,
                cfg.vision.fov_half_width,
                &mut flow_rng,
            )?;

            let guess1 = mount.camera_pose(&last_fix_state);
            let guess2 = mount.camera_pose(&corrected);
            let mut rec = VisionRecord {
                t,
                iterations: 0,
                residual_norm: f64::NAN,
                converged: false,
                rank: 0,
                used: false,
                innovation: None,
                vision_error: None,
                note: String::new(),
            };
            let outcome = ParameterVector::from_pose_motion(&guess1, &guess1.motion_to(&guess2))
                .and_then(|initial| solve(&initial, &flow, grid, &solver_cfg));
            match outcome {
                Ok(est) => {
                    rec.iterations = est.iterations;
                    rec.residual_norm = est.final_residual_norm;
                    rec.converged = est.converged;
                    rec.rank = est.jacobian_rank;
                    if est.converged {
                        let body = mount.body_pose(&est.pose2());
                        rec.vision_error = compose_measurement(&body, &truth2.nav_state()).ok().map(|z| z.0);
                        match compose_measurement(&body, &corrected).and_then(|z| filter.update(&z)) {
                            Ok((update, feedback)) => {
                                (corrected, bias) = apply_corrections(&corrected, &bias, &feedback);
                                rec.innovation = Some(update.innovation);
                                rec.used = true;
                            }
                            Err(e) => {
                                log::warn!("t={t}: measurement rejected: {e}");
                                rec.note = e.to_string();
                            }
                        }
                    } else {
                        log::warn!("t={t}: pose solver did not converge; skipping fix");
                        rec.note = "not converged".into();
                    }
                }
                Err(e) => {
                    log::warn!("t={t}: pose solver failed: {e}");
                    rec.note = e.to_string();
                }
            }
            vision.push(rec);
            last_fix_state = corrected;
            last_fix_time = t;
        }

        steps.push(StepRecord {
            t,
            truth: trajectory.sample(t).nav_state(),
            drift,
            corrected,
            p_diag: filter.covariance.diagonal(),
        });
    }
    Ok(EpisodeRecord { steps, vision })
}
