//! Absolute pose and ego-motion from an optical-flow field constrained by the DTM.
//!
//! Each correspondence is turned into a three-component residual: the ray through
//! the first image point is intersected with the terrain, the hit point is moved
//! into the second camera frame, and its component orthogonal to the second image
//! ray (normalized by its length) must vanish. Each block has rank at most two,
//! and with six features the linearization always retains a scale-like null
//! direction, so the solver requires at least seven.

mod residual;
mod solve;

pub use residual::{
    ground_point_estimates, jacobian_fd, jacobian_rank, residual_one, stacked_residual, RankReport,
};
pub use solve::solve;

use nalgebra::SVector;

use crate::attitude::{euler_of, wrap_pi, EulerAngles};
use crate::camera::{ImagePoint, Pose, RelativeMotion};
use crate::error::{NavError, Result};
use crate::Vec3;

/// Minimum number of correspondences for a nonsingular linearization.
pub const MIN_FEATURES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowCorrespondence {
    pub u1: ImagePoint,
    pub u2: ImagePoint,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowField {
    pub correspondences: Vec<FlowCorrespondence>,
}

impl FlowField {
    pub fn new(correspondences: Vec<FlowCorrespondence>) -> Self {
        Self { correspondences }
    }

    pub fn len(&self) -> usize {
        self.correspondences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correspondences.is_empty()
    }

    /// Leading `n` correspondences.
    pub fn truncated(&self, n: usize) -> FlowField {
        FlowField::new(self.correspondences.iter().take(n).copied().collect())
    }
}

/// The twelve unknowns: first-camera position and Euler angles, then inter-frame
/// translation and Euler angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterVector(pub SVector<f64, 12>);

impl ParameterVector {
    pub fn from_pose_motion(pose1: &Pose, motion: &RelativeMotion) -> Result<Self> {
        let a1 = euler_of(&pose1.rotation)?;
        let a12 = euler_of(&motion.rotation)?;
        let mut v = SVector::<f64, 12>::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&pose1.position);
        v.fixed_rows_mut::<3>(3).copy_from(&a1.to_vector());
        v.fixed_rows_mut::<3>(6).copy_from(&motion.translation);
        v.fixed_rows_mut::<3>(9).copy_from(&a12.to_vector());
        Ok(Self(v))
    }

    pub fn p1(&self) -> Vec3 {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn angles1(&self) -> EulerAngles {
        EulerAngles::from_vector(&self.0.fixed_rows::<3>(3).into_owned())
    }

    pub fn p12(&self) -> Vec3 {
        self.0.fixed_rows::<3>(6).into_owned()
    }

    pub fn angles12(&self) -> EulerAngles {
        EulerAngles::from_vector(&self.0.fixed_rows::<3>(9).into_owned())
    }

    pub fn pose1(&self) -> Pose {
        Pose::new(self.p1(), self.angles1().dcm())
    }

    pub fn motion(&self) -> RelativeMotion {
        RelativeMotion {
            translation: self.p12(),
            rotation: self.angles12().dcm(),
        }
    }

    /// Same rotations with every Euler angle wrapped into (-pi, pi].
    pub fn wrapped(&self) -> Self {
        let mut v = self.0;
        for i in [3, 4, 5, 9, 10, 11] {
            v[i] = wrap_pi(v[i]);
        }
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobustLoss {
    None,
    /// Huber loss on each feature's residual norm, solved by iterative reweighting.
    Huber { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative step-size stopping threshold.
    pub step_tolerance: f64,
    /// Absolute stacked-residual-norm stopping threshold.
    pub residual_tolerance: f64,
    /// Relative cost-change stopping threshold for accepted steps.
    pub cost_tolerance: f64,
    /// Consecutive non-decreasing Gauss-Newton iterations before switching to LM.
    pub gn_stall_window: usize,
    pub lm_lambda_init: f64,
    pub lm_lambda_factor: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Largest position change per iteration as a fraction of the median viewing
    /// distance at the initial guess; also the largest angle change in radians.
    pub max_step_fraction: f64,
    pub robust_loss: RobustLoss,
    /// Intersect the DTM once at the initial guess and keep those contacts fixed.
    pub frozen_ground_points: bool,
    /// Singular values of the column-equilibrated Jacobian below this fraction of
    /// the largest one do not count toward its rank.
    pub rank_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_tolerance: 1e-10,
            residual_tolerance: 1e-12,
            cost_tolerance: 1e-6,
            gn_stall_window: 3,
            lm_lambda_init: 1e-3,
            lm_lambda_factor: 10.0,
            fd_step: 1e-7,
            max_step_fraction: 0.2,
            robust_loss: RobustLoss::None,
            frozen_ground_points: false,
            rank_tolerance: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.step_tolerance,
            self.residual_tolerance,
            self.cost_tolerance,
            self.lm_lambda_init,
            self.fd_step,
            self.max_step_fraction,
            self.rank_tolerance,
        ];
        if self.max_iterations == 0 || self.gn_stall_window == 0 || positive.iter().any(|v| !(*v > 0.0)) {
            return Err(NavError::Scenario("solver tolerances and counts must be positive".into()));
        }
        if !(self.lm_lambda_factor > 1.0) {
            return Err(NavError::Scenario("lm_lambda_factor must exceed 1".into()));
        }
        if let RobustLoss::Huber { threshold } = self.robust_loss {
            if !(threshold > 0.0) {
                return Err(NavError::Scenario("Huber threshold must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseMotionEstimate {
    pub pose1: Pose,
    pub motion: RelativeMotion,
    pub params: ParameterVector,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub jacobian_rank: usize,
    pub condition_number: f64,
    /// Whether the solver fell back to Levenberg-Marquardt.
    pub switched_to_lm: bool,
}

impl PoseMotionEstimate {
    /// Pose of the second camera.
    pub fn pose2(&self) -> Pose {
        self.pose1.compose(&self.motion)
    }
}
