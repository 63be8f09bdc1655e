//! Z-Y-X Euler angles and the body-to-L direction cosine matrix.
//!
//! The DCM is the product `Phi * Theta * Psi` of the three elemental matrices below.
//! Its small-angle form is `I - [a]x` for an angle vector `a`, so a small rotation
//! built from it acts on frames, not vectors. Every consumer in the crate (solver
//! parametrization, mechanization, filter error angles) uses this one convention.

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::{Mat3, Vec3};

/// Pitch values closer than this to +/- pi/2 are rejected by [`euler_of`].
pub const GIMBAL_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub const ZERO: EulerAngles = EulerAngles {
        roll: 0.0,
        pitch: 0.0,
        yaw: 0.0,
    };

    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn from_vector(v: &Vec3) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vector(self) -> Vec3 {
        Vec3::new(self.roll, self.pitch, self.yaw)
    }

    pub fn dcm(self) -> Mat3 {
        dcm_b_to_l(self.roll, self.pitch, self.yaw)
    }
}

fn psi_dcm(psi: f64) -> Mat3 {
    let (s, c) = psi.sin_cos();
    Mat3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

fn theta_dcm(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

fn phi_dcm(phi: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

/// Body-to-L direction cosine matrix for roll `phi`, pitch `theta`, yaw `psi`.
pub fn dcm_b_to_l(phi: f64, theta: f64, psi: f64) -> Mat3 {
    phi_dcm(phi) * theta_dcm(theta) * psi_dcm(psi)
}

/// Inverse of [`dcm_b_to_l`]. Fails within [`GIMBAL_MARGIN`] of gimbal lock.
pub fn euler_of(dcm: &Mat3) -> Result<EulerAngles> {
    let angles = euler_of_unchecked(dcm);
    if angles.pitch.abs() >= std::f64::consts::FRAC_PI_2 - GIMBAL_MARGIN {
        return Err(NavError::DegenerateAttitude { pitch: angles.pitch });
    }
    Ok(angles)
}

/// Inverse of [`dcm_b_to_l`] without the gimbal-lock check.
pub fn euler_of_unchecked(dcm: &Mat3) -> EulerAngles {
    let pitch = (-dcm[(0, 2)]).clamp(-1.0, 1.0).asin();
    let roll = dcm[(1, 2)].atan2(dcm[(2, 2)]);
    let yaw = dcm[(0, 1)].atan2(dcm[(0, 0)]);
    EulerAngles { roll, pitch, yaw }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_pi(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Frame rotation for a small angle vector: the exact rotation whose first-order
/// form matches `dcm_b_to_l` of the same angles, `I - [a]x`.
pub fn small_rotation(angle: &Vec3) -> Mat3 {
    nalgebra::Rotation3::new(-angle).into_inner()
}

/// Inverse of [`small_rotation`].
pub fn small_rotation_angle(rotation: &Mat3) -> Vec3 {
    let r = rotation;
    let v = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * 0.5;
    let s = v.norm();
    let angle = s.atan2((r.trace() - 1.0) * 0.5);
    if s < 1e-300 {
        return -v;
    }
    -v * (angle / s)
}

/// Angle of the rotation taking `b` onto `a`, accurate down to rounding level.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let e = a * b.transpose();
    let s = Vec3::new(e[(2, 1)] - e[(1, 2)], e[(0, 2)] - e[(2, 0)], e[(1, 0)] - e[(0, 1)]).norm() * 0.5;
    let c = (e.trace() - 1.0) * 0.5;
    s.atan2(c)
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
