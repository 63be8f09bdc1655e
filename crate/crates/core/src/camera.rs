//! Camera frames, normalized pinhole projection, and the projection operators the
//! DTM constraint is built from.
//!
//! A [`Pose`] maps camera coordinates to world coordinates, `w = R c + p`. A
//! [`RelativeMotion`] maps first-camera to second-camera coordinates,
//! `c2 = R12 c1 + p12`, so its translation is expressed in the second camera frame.
//! The camera z axis is the optical axis; image points are in normalized units
//! (focal length 1, principal point at the origin).

use crate::error::{NavError, Result};
use crate::{Mat3, Vec2, Vec3};

/// Denominator guard shared by [`projection_operator`], [`l_operator`] and
/// [`depth_from_plane`].
pub const EPS_DEN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    /// Camera-to-world rotation.
    pub rotation: Mat3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeMotion {
    /// Translation in the second camera frame.
    pub translation: Vec3,
    /// Rotation from the first to the second camera frame.
    pub rotation: Mat3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint(pub Vec2);

/// Homogeneous image ray `(u_x, u_y, 1)` in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousRay(Vec3);

impl ImagePoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self(Vec2::new(x, y))
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn homogeneous(&self) -> HomogeneousRay {
        HomogeneousRay(Vec3::new(self.0.x, self.0.y, 1.0))
    }
}

impl HomogeneousRay {
    pub fn vector(&self) -> &Vec3 {
        &self.0
    }
}

impl Pose {
    pub fn new(position: Vec3, rotation: Mat3) -> Self {
        Self { position, rotation }
    }

    /// True when the rotation is orthonormal with determinant +1 to `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        is_rotation(&self.rotation, tol)
    }

    /// Pose of the second camera given this (first) pose and the inter-frame motion.
    pub fn compose(&self, motion: &RelativeMotion) -> Pose {
        let rotation = self.rotation * motion.rotation.transpose();
        Pose {
            position: self.position - rotation * motion.translation,
            rotation,
        }
    }

    /// Motion taking this pose's camera frame to `second`'s.
    pub fn motion_to(&self, second: &Pose) -> RelativeMotion {
        RelativeMotion {
            rotation: second.rotation.transpose() * self.rotation,
            translation: second.rotation.transpose() * (self.position - second.position),
        }
    }
}

pub fn is_rotation(m: &Mat3, tol: f64) -> bool {
    (m.transpose() * m - Mat3::identity()).abs().max() <= tol && (m.determinant() - 1.0).abs() <= tol
}

/// `R^T (g - p)`.
pub fn world_to_camera(pose: &Pose, g: &Vec3) -> Vec3 {
    pose.rotation.transpose() * (g - pose.position)
}

/// `R c + p`.
pub fn camera_to_world(pose: &Pose, c: &Vec3) -> Vec3 {
    pose.rotation * c + pose.position
}

/// Pinhole projection of a camera-frame point.
pub fn project(g_cam: &Vec3) -> Result<ImagePoint> {
    if !(g_cam.z > 0.0) {
        return Err(NavError::BehindCamera { z: g_cam.z });
    }
    Ok(ImagePoint::new(g_cam.x / g_cam.z, g_cam.y / g_cam.z))
}

/// Oblique projector `I - u s^T / (s^T u)` onto the plane normal to `s`, along `u`.
pub fn projection_operator(u: &Vec3, s: &Vec3) -> Result<Mat3> {
    let den = s.dot(u);
    if den.abs() <= EPS_DEN {
        return Err(NavError::DegenerateProjection { denominator: den });
    }
    Ok(Mat3::identity() - u * s.transpose() / den)
}

/// `q1 N^T / (N^T R1 q1)`: maps a world offset onto the first camera's viewing ray,
/// along the tangent plane with normal `N`.
pub fn l_operator(q1: &HomogeneousRay, n: &Vec3, r1: &Mat3) -> Result<Mat3> {
    let den = n.dot(&(r1 * q1.vector()));
    if den.abs() <= EPS_DEN {
        return Err(NavError::GrazingIncidence { denominator: den });
    }
    Ok(q1.vector() * n.transpose() / den)
}

/// Depth along `q1` at which the first camera's ray meets the tangent plane through
/// `contact`.
pub fn depth_from_plane(pose1: &Pose, q1: &HomogeneousRay, contact: &crate::dtm::SurfaceContact) -> Result<f64> {
    let n = &contact.normal;
    let den = n.dot(&(pose1.rotation * q1.vector()));
    if den.abs() <= EPS_DEN {
        return Err(NavError::GrazingIncidence { denominator: den });
    }
    Ok((n.dot(&contact.point) - n.dot(&pose1.position)) / den)
}
