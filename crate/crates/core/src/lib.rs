//! Terrain-referenced visual navigation.
//!
//! Absolute camera pose and ego-motion are recovered from two-frame optical flow by
//! constraining feature depths with a digital terrain map ([`pose_solver`]). Those
//! vision fixes correct a flat-Earth strapdown navigator ([`ins`]) through a
//! fifteen-state error-state Kalman filter ([`ekf`]). [`sim`] synthesizes terrain,
//! trajectories, IMU streams and flow fields and runs the closed loop.

pub mod attitude;
pub mod camera;
pub mod dtm;
pub mod ekf;
mod error;
pub mod ins;
pub mod pose_solver;
pub mod sim;

pub use attitude::{dcm_b_to_l, euler_of, EulerAngles};
pub use camera::{HomogeneousRay, ImagePoint, Pose, RelativeMotion};
pub use dtm::{SurfaceContact, TerrainGrid};
pub use ekf::{BiasCoupling, Covariance15, ErrorState, ErrorStateFilter, Measurement, NoiseConfig};
pub use error::{NavError, Result};
pub use ins::{BiasState, ImuSample, NavState};
pub use pose_solver::{FlowCorrespondence, FlowField, ParameterVector, PoseMotionEstimate, RobustLoss, SolverConfig};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
