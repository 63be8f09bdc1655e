//! Fifteen-state error-state extended Kalman filter.
//!
//! State layout (fixed):
//!
//! ```text
//!  [0..3)   dx dy dz        position error (m)
//!  [3..6)   dVx dVy dVz     velocity error (m/s)
//!  [6..9)   dphi dtheta dpsi  Euler angles of D_true * D_ins^T (rad)
//!  [9..12)  ax ay az        accelerometer bias (m/s^2)
//!  [12..15) bx by bz        gyro bias (rad/s)
//! ```
//!
//! The measurement is the six-vector of vision-minus-INS position and attitude
//! differences. Every time update resets the first nine components to zero and
//! carries the bias components forward.

use nalgebra::{SMatrix, SVector};

use crate::attitude::euler_of;
use crate::camera::Pose;
use crate::error::{NavError, Result};
use crate::ins::NavState;
use crate::{Mat3, Vec3};

pub type Matrix15 = SMatrix<f64, 15, 15>;
pub type Covariance15 = Matrix15;
pub type MeasurementMatrix = SMatrix<f64, 6, 15>;
pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Gain = SMatrix<f64, 15, 6>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorState(pub SVector<f64, 15>);

impl ErrorState {
    pub fn zeros() -> Self {
        Self(SVector::zeros())
    }

    fn block(&self, start: usize) -> Vec3 {
        self.0.fixed_rows::<3>(start).into_owned()
    }

    pub fn position(&self) -> Vec3 {
        self.block(0)
    }

    pub fn velocity(&self) -> Vec3 {
        self.block(3)
    }

    pub fn attitude(&self) -> Vec3 {
        self.block(6)
    }

    pub fn accel_bias(&self) -> Vec3 {
        self.block(9)
    }

    pub fn gyro_bias(&self) -> Vec3 {
        self.block(12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement(pub SVector<f64, 6>);

impl Measurement {
    pub fn position(&self) -> Vec3 {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn attitude(&self) -> Vec3 {
        self.0.fixed_rows::<3>(3).into_owned()
    }
}

/// Placement of the bias blocks in the dynamics matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasCoupling {
    /// Accelerometer bias drives the attitude rows, gyro bias the velocity rows.
    #[default]
    Crossed,
    /// Accelerometer bias drives velocity, gyro bias drives attitude.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Accelerometer noise; velocity process noise is `accel_noise^2 * dt^2`.
    pub accel_noise: f64,
    /// Gyro noise; attitude process noise is `gyro_noise^2 * dt`.
    pub gyro_noise: f64,
    pub q_bias_accel: f64,
    pub q_bias_gyro: f64,
    /// Measurement position variance (m^2).
    pub r_pos: f64,
    /// Measurement angle variance (rad^2).
    pub r_ang: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            accel_noise: 0.05,
            gyro_noise: 1e-4,
            q_bias_accel: 1e-10,
            q_bias_gyro: 1e-12,
            r_pos: 6.0,
            r_ang: 5e-4,
        }
    }
}

impl NoiseConfig {
    /// Diagonal `r_pos * I3 (+) r_ang * I3`.
    pub fn measurement_covariance(&self) -> Matrix6 {
        let mut r = Matrix6::zeros();
        for i in 0..3 {
            r[(i, i)] = self.r_pos;
            r[(i + 3, i + 3)] = self.r_ang;
        }
        r
    }
}

/// Continuous-time error dynamics matrix for specific force `f_vec` (L frame).
pub fn assemble_phi(f_vec: &Vec3, dcm: &Mat3, coupling: BiasCoupling) -> Matrix15 {
    let mut phi = Matrix15::zeros();
    phi.fixed_view_mut::<3, 3>(0, 3).copy_from(&Mat3::identity());
    let f = f_vec;
    let skew = Mat3::new(0.0, -f.z, f.y, f.z, 0.0, -f.x, -f.y, f.x, 0.0);
    phi.fixed_view_mut::<3, 3>(3, 6).copy_from(&skew);
    let (attitude_cols, velocity_cols) = match coupling {
        BiasCoupling::Crossed => (9, 12),
        BiasCoupling::Conventional => (12, 9),
    };
    phi.fixed_view_mut::<3, 3>(6, attitude_cols).copy_from(&(-dcm));
    phi.fixed_view_mut::<3, 3>(3, velocity_cols).copy_from(&(-dcm));
    phi
}

/// `I + phi * dt`.
pub fn transition(phi: &Matrix15, dt: f64) -> Matrix15 {
    Matrix15::identity() + phi * dt
}

pub fn process_noise(cfg: &NoiseConfig, dt: f64) -> Matrix15 {
    let mut q = Matrix15::zeros();
    let entries = [
        (3, cfg.accel_noise.powi(2) * dt * dt),
        (6, cfg.gyro_noise.powi(2) * dt),
        (9, cfg.q_bias_accel * dt),
        (12, cfg.q_bias_gyro * dt),
    ];
    for (start, value) in entries {
        for i in start..start + 3 {
            q[(i, i)] = value;
        }
    }
    q
}

/// Prediction: zero the navigation errors, keep the biases, propagate `P`.
pub fn time_update(x_prev: &ErrorState, p_prev: &Covariance15, a: &Matrix15, q: &Matrix15) -> (ErrorState, Covariance15) {
    let mut x = ErrorState::zeros();
    x.0.fixed_rows_mut::<6>(9).copy_from(&x_prev.0.fixed_rows::<6>(9));
    (x, a * p_prev * a.transpose() + q)
}

/// Selects position and attitude errors from the state.
pub fn measurement_matrix() -> MeasurementMatrix {
    let mut h = MeasurementMatrix::zeros();
    for i in 0..3 {
        h[(i, i)] = 1.0;
        h[(i + 3, i + 6)] = 1.0;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub state: ErrorState,
    pub covariance: Covariance15,
    pub gain: Gain,
    pub innovation: SVector<f64, 6>,
    /// Condition number of the innovation covariance.
    pub innovation_condition: f64,
}

/// Kalman gain, state correction and Joseph-form covariance update.
pub fn measurement_update(
    x_prior: &ErrorState,
    p_prior: &Covariance15,
    z: &Measurement,
    r: &Matrix6,
) -> Result<UpdateOutcome> {
    let h = measurement_matrix();
    let s = h * p_prior * h.transpose() + r;
    let s = (s + s.transpose()) * 0.5;
    let condition = {
        let sv = s.singular_values();
        let min = sv.min();
        if min > 0.0 {
            sv.max() / min
        } else {
            f64::INFINITY
        }
    };
    if !condition.is_finite() || condition > 1e14 {
        return Err(NavError::SingularInnovation { condition });
    }
    let chol = s.cholesky().ok_or(NavError::SingularInnovation { condition })?;
    // K = P H^T S^-1, i.e. K^T = S^-1 H P for symmetric P and S.
    let gain: Gain = chol.solve(&(h * p_prior)).transpose();
    let innovation = z.0 - h * x_prior.0;
    let state = ErrorState(x_prior.0 + gain * innovation);
    let ikh = Matrix15::identity() - gain * h;
    let p = ikh * p_prior * ikh.transpose() + gain * r * gain.transpose();
    Ok(UpdateOutcome {
        state,
        covariance: (p + p.transpose()) * 0.5,
        gain,
        innovation,
        innovation_condition: condition,
    })
}

/// Vision-minus-INS measurement. `vision_pose` carries the vehicle (body) attitude;
/// the angle part is the Euler angles of `D_m * D_c^T`.
pub fn compose_measurement(vision_pose: &Pose, ins_state: &NavState) -> Result<Measurement> {
    let dp = vision_pose.position - ins_state.position;
    let da = euler_of(&(vision_pose.rotation * ins_state.dcm().transpose()))?;
    let mut z = SVector::<f64, 6>::zeros();
    z.fixed_rows_mut::<3>(0).copy_from(&dp);
    z.fixed_rows_mut::<3>(3).copy_from(&da.to_vector());
    Ok(Measurement(z))
}

/// Minimum eigenvalue and symmetry defect, for covariance health checks.
pub fn covariance_health(p: &Covariance15) -> (f64, f64) {
    let asym = (p - p.transpose()).abs().max();
    let sym = (p + p.transpose()) * 0.5;
    (sym.symmetric_eigenvalues().min(), asym)
}

/// Running filter: error state, covariance and configuration.
#[derive(Debug, Clone)]
pub struct ErrorStateFilter {
    pub state: ErrorState,
    pub covariance: Covariance15,
    pub noise: NoiseConfig,
    pub coupling: BiasCoupling,
    pub measurement_noise: Matrix6,
}

impl ErrorStateFilter {
    pub fn new(initial_covariance: Covariance15, noise: NoiseConfig, coupling: BiasCoupling) -> Self {
        Self {
            state: ErrorState::zeros(),
            covariance: initial_covariance,
            measurement_noise: noise.measurement_covariance(),
            noise,
            coupling,
        }
    }

    pub fn with_measurement_noise(mut self, r: Matrix6) -> Self {
        self.measurement_noise = r;
        self
    }

    pub fn predict(&mut self, f_vec: &Vec3, dcm: &Mat3, dt: f64) {
        let a = transition(&assemble_phi(f_vec, dcm, self.coupling), dt);
        let q = process_noise(&self.noise, dt);
        (self.state, self.covariance) = time_update(&self.state, &self.covariance, &a, &q);
    }

    /// Applies a measurement and returns the outcome together with the correction
    /// to feed back into the navigator: full navigation errors, bias increments.
    pub fn update(&mut self, z: &Measurement) -> Result<(UpdateOutcome, ErrorState)> {
        let outcome = measurement_update(&self.state, &self.covariance, z, &self.measurement_noise)?;
        let mut feedback = outcome.state;
        for i in 9..15 {
            feedback.0[i] -= self.state.0[i];
        }
        self.state = outcome.state;
        self.covariance = outcome.covariance;
        Ok((outcome, feedback))
    }
}
