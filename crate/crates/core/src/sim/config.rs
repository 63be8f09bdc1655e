use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ekf::{BiasCoupling, NoiseConfig};
use crate::pose_solver::{RobustLoss, SolverConfig, MIN_FEATURES};

/// Scenario description, read from a flat key-value file with dotted section names
/// (TOML dotted keys), e.g. `terrain.kind = "rolling"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Episode length (s).
    pub duration: f64,
    pub gravity: f64,
    pub terrain: TerrainSpec,
    pub trajectory: TrajectorySpec,
    pub imu: ImuSpec,
    pub vision: VisionSpec,
    pub solver: SolverSpec,
    pub filter: FilterSpec,
    pub initial: InitialErrorSpec,
    pub solve: SolveSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerrainKind {
    Flat,
    Inclined,
    Rolling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainSpec {
    pub kind: TerrainKind,
    /// Height gain per meter of x for `inclined`.
    pub slope: f64,
    /// Amplitude (m) of each of the two sinusoids for `rolling`.
    pub amplitude: f64,
    pub wavelength: f64,
    /// Seeds the sinusoid phases for `rolling`.
    pub seed: u64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    /// Load heights from an ASCII grid file instead of synthesizing them.
    pub dtm_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub start: [f64; 3],
    /// Ground speed (m/s).
    pub speed: f64,
    /// Initial direction of travel, counterclockwise from +x (rad).
    pub heading: f64,
    /// Durations (s) of consecutive constant-turn-rate segments; the last one
    /// extends to the end of the episode.
    pub segment_durations: Vec<f64>,
    /// Turn rate (rad/s) of each segment; 0 is a straight leg.
    pub turn_rates: Vec<f64>,
    /// Amplitude (rad) of a slow roll/pitch oscillation superimposed on level flight.
    pub attitude_wobble: f64,
    pub wobble_period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuSpec {
    pub rate: f64,
    /// Per-sample accelerometer noise (m/s^2); velocity increments get `accel_noise * dt`.
    pub accel_noise: f64,
    /// Gyro angle random walk (rad/sqrt(s)); angle increments get `gyro_noise * sqrt(dt)`.
    pub gyro_noise: f64,
    pub accel_bias: [f64; 3],
    pub gyro_bias: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisionSpec {
    pub rate: f64,
    pub n_features: usize,
    /// Gaussian noise on every normalized image coordinate.
    pub pixel_noise: f64,
    /// Half-width of the square field of view in normalized image units.
    pub fov_half_width: f64,
    /// Euler angles of the camera-to-body rotation; the default looks straight down.
    pub mount: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub residual_tolerance: f64,
    pub cost_tolerance: f64,
    pub gn_stall_window: usize,
    pub lm_lambda_init: f64,
    pub lm_lambda_factor: f64,
    pub fd_step: f64,
    pub max_step_fraction: f64,
    /// Huber threshold; 0 disables the robust loss.
    pub huber_threshold: f64,
    pub frozen_ground_points: bool,
    pub rank_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingSpec {
    Crossed,
    Conventional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub coupling: CouplingSpec,
    pub accel_noise: f64,
    pub gyro_noise: f64,
    pub q_bias_accel: f64,
    pub q_bias_gyro: f64,
    pub r_pos: f64,
    pub r_ang: f64,
    /// Optional 6x6 measurement covariance CSV (as written by `calibrate-r`).
    pub r_file: Option<String>,
    pub sigma_accel_bias: f64,
    pub sigma_gyro_bias: f64,
}

/// Standard deviations of the navigator's initial error, also used for the
/// filter's initial covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialErrorSpec {
    pub sigma_pos: f64,
    pub sigma_vel: f64,
    pub sigma_att: f64,
}

/// Single pose-solve scenario used by `solve` and `calibrate-r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSpec {
    pub n_features: usize,
    /// Image-plane noise sigma (normalized units).
    pub pixel_noise: f64,
    /// Initial-guess offset on each position axis (m).
    pub perturb_pos: f64,
    /// Initial-guess offset on each Euler angle of both rotations (rad).
    pub perturb_att: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            duration: 100.0,
            gravity: crate::ins::STANDARD_GRAVITY,
            terrain: TerrainSpec::default(),
            trajectory: TrajectorySpec::default(),
            imu: ImuSpec::default(),
            vision: VisionSpec::default(),
            solver: SolverSpec::default(),
            filter: FilterSpec::default(),
            initial: InitialErrorSpec::default(),
            solve: SolveSpec::default(),
        }
    }
}

impl Default for TerrainSpec {
    fn default() -> Self {
        Self {
            kind: TerrainKind::Rolling,
            slope: 0.1,
            amplitude: 10.0,
            wavelength: 60.0,
            seed: 1,
            origin_x: -1500.0,
            origin_y: -1500.0,
            cell_size: 5.0,
            n_cols: 601,
            n_rows: 601,
            dtm_file: None,
        }
    }
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            start: [-900.0, -300.0, 100.0],
            speed: 20.0,
            heading: 0.0,
            segment_durations: vec![30.0, 20.0, 30.0, 20.0],
            turn_rates: vec![0.0, 0.05, 0.0, -0.05],
            attitude_wobble: 0.02,
            wobble_period: 20.0,
        }
    }
}

impl Default for ImuSpec {
    fn default() -> Self {
        Self {
            rate: 100.0,
            accel_noise: 0.05,
            gyro_noise: 1e-4,
            accel_bias: [0.01, 0.01, 0.01],
            gyro_bias: [0.001, 0.001, 0.001],
        }
    }
}

impl Default for VisionSpec {
    fn default() -> Self {
        Self {
            rate: 1.0,
            n_features: 10,
            pixel_noise: 1e-3,
            fov_half_width: 0.5,
            mount: [std::f64::consts::PI, 0.0, 0.0],
        }
    }
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            max_iterations: d.max_iterations,
            step_tolerance: d.step_tolerance,
            residual_tolerance: d.residual_tolerance,
            cost_tolerance: d.cost_tolerance,
            gn_stall_window: d.gn_stall_window,
            lm_lambda_init: d.lm_lambda_init,
            lm_lambda_factor: d.lm_lambda_factor,
            fd_step: d.fd_step,
            max_step_fraction: d.max_step_fraction,
            huber_threshold: 0.0,
            frozen_ground_points: d.frozen_ground_points,
            rank_tolerance: d.rank_tolerance,
        }
    }
}

impl Default for FilterSpec {
    fn default() -> Self {
        let d = NoiseConfig::default();
        Self {
            coupling: CouplingSpec::Crossed,
            accel_noise: d.accel_noise,
            gyro_noise: d.gyro_noise,
            q_bias_accel: d.q_bias_accel,
            q_bias_gyro: d.q_bias_gyro,
            r_pos: d.r_pos,
            r_ang: d.r_ang,
            r_file: None,
            sigma_accel_bias: 0.02,
            sigma_gyro_bias: 0.002,
        }
    }
}

impl Default for InitialErrorSpec {
    fn default() -> Self {
        Self {
            sigma_pos: 1.0,
            sigma_vel: 0.1,
            sigma_att: 1e-3,
        }
    }
}

impl Default for SolveSpec {
    fn default() -> Self {
        Self {
            n_features: 7,
            pixel_noise: 0.0,
            perturb_pos: 2.0,
            perturb_att: 0.5f64.to_radians(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("config parse error: {0}")]
    ParseNoSpan(String),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| match e.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = span.start - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                ConfigError::Parse {
                    line,
                    column,
                    message: e.message().to_string(),
                }
            }
            None => ConfigError::ParseNoSpan(e.message().to_string()),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, field: &'static str, message: &str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    field,
                    message: message.to_string(),
                })
            }
        }
        check(self.duration > 0.0, "duration", "must be positive")?;
        check(self.gravity >= 0.0, "gravity", "must be non-negative")?;
        check(self.imu.rate > 0.0, "imu.rate", "must be positive")?;
        check(self.vision.rate > 0.0, "vision.rate", "must be positive")?;
        check(self.imu.rate >= self.vision.rate, "vision.rate", "must not exceed imu.rate")?;
        let ratio = self.imu.rate / self.vision.rate;
        check(
            (ratio - ratio.round()).abs() < 1e-9,
            "vision.rate",
            "imu.rate must be an integer multiple of vision.rate",
        )?;
        check(self.vision.n_features >= MIN_FEATURES, "vision.n_features", "must be at least 7")?;
        check(self.vision.pixel_noise >= 0.0, "vision.pixel_noise", "must be non-negative")?;
        check(self.vision.fov_half_width > 0.0, "vision.fov_half_width", "must be positive")?;
        check(self.terrain.cell_size > 0.0, "terrain.cell_size", "must be positive")?;
        check(
            self.terrain.n_cols >= 2 && self.terrain.n_rows >= 2,
            "terrain.n_cols",
            "grid needs at least 2x2 nodes",
        )?;
        check(self.terrain.wavelength > 0.0, "terrain.wavelength", "must be positive")?;
        check(
            self.trajectory.segment_durations.len() == self.trajectory.turn_rates.len(),
            "trajectory.turn_rates",
            "must have one entry per segment duration",
        )?;
        check(
            self.trajectory.segment_durations.iter().all(|d| *d > 0.0),
            "trajectory.segment_durations",
            "must be positive",
        )?;
        check(self.trajectory.wobble_period > 0.0, "trajectory.wobble_period", "must be positive")?;
        let noise = [
            self.imu.accel_noise,
            self.imu.gyro_noise,
            self.filter.accel_noise,
            self.filter.gyro_noise,
            self.filter.q_bias_accel,
            self.filter.q_bias_gyro,
            self.filter.r_pos,
            self.filter.r_ang,
            self.filter.sigma_accel_bias,
            self.filter.sigma_gyro_bias,
            self.initial.sigma_pos,
            self.initial.sigma_vel,
            self.initial.sigma_att,
        ];
        check(noise.iter().all(|v| *v >= 0.0), "filter", "noise parameters must be non-negative")?;
        check(self.solve.n_features >= 1, "solve.n_features", "must be positive")?;
        check(self.solve.pixel_noise >= 0.0, "solve.pixel_noise", "must be non-negative")?;
        check(
            self.solve.perturb_pos >= 0.0 && self.solve.perturb_att >= 0.0,
            "solve.perturb_pos",
            "perturbations must be non-negative",
        )?;
        check(self.solver.huber_threshold >= 0.0, "solver.huber_threshold", "must be non-negative")?;
        self.solver_config().validate().map_err(|e| ConfigError::Invalid {
            field: "solver",
            message: e.to_string(),
        })?;
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            max_iterations: s.max_iterations,
            step_tolerance: s.step_tolerance,
            residual_tolerance: s.residual_tolerance,
            cost_tolerance: s.cost_tolerance,
            gn_stall_window: s.gn_stall_window,
            lm_lambda_init: s.lm_lambda_init,
            lm_lambda_factor: s.lm_lambda_factor,
            fd_step: s.fd_step,
            max_step_fraction: s.max_step_fraction,
            robust_loss: if s.huber_threshold > 0.0 {
                RobustLoss::Huber {
                    threshold: s.huber_threshold,
                }
            } else {
                RobustLoss::None
            },
            frozen_ground_points: s.frozen_ground_points,
            rank_tolerance: s.rank_tolerance,
        }
    }

    pub fn noise_config(&self) -> NoiseConfig {
        let f = &self.filter;
        NoiseConfig {
            accel_noise: f.accel_noise,
            gyro_noise: f.gyro_noise,
            q_bias_accel: f.q_bias_accel,
            q_bias_gyro: f.q_bias_gyro,
            r_pos: f.r_pos,
            r_ang: f.r_ang,
        }
    }

    pub fn coupling(&self) -> BiasCoupling {
        match self.filter.coupling {
            CouplingSpec::Crossed => BiasCoupling::Crossed,
            CouplingSpec::Conventional => BiasCoupling::Conventional,
        }
    }

    pub fn imu_steps(&self) -> usize {
        (self.duration * self.imu.rate).round() as usize
    }

    pub fn imu_steps_per_vision(&self) -> usize {
        (self.imu.rate / self.vision.rate).round() as usize
    }
}
