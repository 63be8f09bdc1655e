//! Scenario synthesis and closed-loop simulation.

pub mod config;
mod episode;
mod flow;
mod imu;
mod monte_carlo;
pub mod report;
mod terrain;
mod trajectory;

pub use config::{ConfigError, ScenarioConfig};
pub use episode::{run_episode, run_episode_on, EpisodeRecord, ErrorSeries, StepRecord, VisionRecord};
pub use flow::synth_flow;
pub use imu::synth_imu;
pub use monte_carlo::{
    calibrate_r, monte_carlo, single_solve, solve_scenario, SolveScenario, CalibrationResult, MonteCarloSummary, SolveSetup, SolveTrial,
    MAX_CALIBRATION_FAILURE_RATE,
};
pub use terrain::synth_terrain;
pub use trajectory::{Trajectory, TruthSample};

use crate::attitude::EulerAngles;
use crate::camera::Pose;
use crate::ins::NavState;
use crate::Mat3;

/// Fixed camera-to-body rotation. The camera attitude is `D_body * M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMount(pub Mat3);

impl CameraMount {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let [r, p, y] = cfg.vision.mount;
        Self(EulerAngles::new(r, p, y).dcm())
    }

    pub fn camera_pose(&self, nav: &NavState) -> Pose {
        Pose::new(nav.position, nav.dcm() * self.0)
    }

    /// Vehicle pose carrying the camera pose `camera`.
    pub fn body_pose(&self, camera: &Pose) -> Pose {
        Pose::new(camera.position, camera.rotation * self.0.transpose())
    }
}
