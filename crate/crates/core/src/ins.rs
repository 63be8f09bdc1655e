//! Flat-Earth strapdown mechanization.
//!
//! The L frame is a local level frame with z up and gravity along -z. Earth rate,
//! transport rate and Coriolis terms are ignored, matching the error model the
//! filter linearizes.

use crate::attitude::{dcm_b_to_l, euler_of_unchecked, small_rotation, EulerAngles};
use crate::ekf::ErrorState;
use crate::{Mat3, Vec3};

pub const STANDARD_GRAVITY: f64 = 9.80665;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NavState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Body-to-L attitude.
    pub attitude: EulerAngles,
}

impl NavState {
    pub fn dcm(&self) -> Mat3 {
        self.attitude.dcm()
    }
}

/// One IMU interval: body-frame velocity and angle increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub d_velocity: Vec3,
    pub d_theta: Vec3,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BiasState {
    /// m/s^2
    pub accel: Vec3,
    /// rad/s
    pub gyro: Vec3,
}

/// Specific force in the L frame, `dcm * dV / dt`.
pub fn specific_force(dcm: &Mat3, sample: &ImuSample) -> Vec3 {
    dcm * (sample.d_velocity / sample.dt)
}

/// Advances the navigation state by one IMU sample.
///
/// The bias-compensated angle increment is applied as a frame rotation on the
/// body side of the DCM. The compensated velocity increment is rotated with the
/// updated DCM, gravity is added, and position integrates the mean of the old and
/// new velocities.
pub fn propagate(state: &NavState, sample: &ImuSample, bias: &BiasState, gravity: f64) -> NavState {
    let dt = sample.dt;
    let d_theta = sample.d_theta - bias.gyro * dt;
    let dcm = state.dcm() * small_rotation(&d_theta);
    let d_velocity = sample.d_velocity - bias.accel * dt;
    let velocity = state.velocity + dcm * d_velocity + Vec3::new(0.0, 0.0, -gravity * dt);
    let position = state.position + (state.velocity + velocity) * (0.5 * dt);
    NavState {
        position,
        velocity,
        attitude: euler_of_unchecked(&dcm),
    }
}

/// Feeds an error-state estimate back into the navigator.
///
/// Position and velocity errors are added; the attitude becomes the Euler angles of
/// `dD * D_c`, where `dD` is the DCM of the error angles; the bias components of
/// `x` are added to the current bias estimates.
pub fn apply_corrections(state: &NavState, bias: &BiasState, x: &ErrorState) -> (NavState, BiasState) {
    let da = x.attitude();
    let correction = dcm_b_to_l(da.x, da.y, da.z);
    let corrected = NavState {
        position: state.position + x.position(),
        velocity: state.velocity + x.velocity(),
        attitude: euler_of_unchecked(&(correction * state.dcm())),
    };
    let bias = BiasState {
        accel: bias.accel + x.accel_bias(),
        gyro: bias.gyro + x.gyro_bias(),
    };
    (corrected, bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn specific_force_cases() {
        let dt = 0.01;
        let s = ImuSample {
            d_velocity: Vec3::new(0.0, 0.0, 9.81 * dt),
            d_theta: Vec3::zeros(),
            dt,
        };
        assert_abs_diff_eq!(specific_force(&Mat3::identity(), &s), Vec3::new(0.0, 0.0, 9.81), epsilon = 1e-12);
        let zero = ImuSample {
            d_velocity: Vec3::zeros(),
            ..s
        };
        assert_eq!(specific_force(&Mat3::identity(), &zero), Vec3::zeros());

        // Yaw of pi/2: body x maps onto the first column of the DCM, (0, -1, 0).
        let yawed = dcm_b_to_l(0.0, 0.0, FRAC_PI_2);
        let fwd = ImuSample {
            d_velocity: Vec3::new(dt, 0.0, 0.0),
            ..s
        };
        assert_abs_diff_eq!(specific_force(&yawed, &fwd), Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn static_equilibrium() {
        let dt = 0.01;
        let g = STANDARD_GRAVITY;
        let s = ImuSample {
            d_velocity: Vec3::new(0.0, 0.0, g * dt),
            d_theta: Vec3::zeros(),
            dt,
        };
        let start = NavState {
            position: Vec3::new(1.0, 2.0, 3.0),
            ..Default::default()
        };
        let mut state = start;
        for _ in 0..1000 {
            state = propagate(&state, &s, &BiasState::default(), g);
        }
        assert_abs_diff_eq!(state.position, start.position, epsilon = 1e-12);
        assert_abs_diff_eq!(state.velocity, Vec3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn coasting() {
        let s = ImuSample {
            d_velocity: Vec3::zeros(),
            d_theta: Vec3::zeros(),
            dt: 0.5,
        };
        let start = NavState {
            velocity: Vec3::new(2.0, -1.0, 0.5),
            ..Default::default()
        };
        let next = propagate(&start, &s, &BiasState::default(), 0.0);
        assert_abs_diff_eq!(next.position, Vec3::new(1.0, -0.5, 0.25), epsilon = 1e-15);
        assert_eq!(next.velocity, start.velocity);
    }

    #[test]
    fn uncompensated_accel_bias_matches_closed_form() {
        let (dt, n, beta) = (0.01, 1000, 0.05);
        let g = STANDARD_GRAVITY;
        let s = ImuSample {
            d_velocity: Vec3::new(beta * dt, 0.0, g * dt),
            d_theta: Vec3::zeros(),
            dt,
        };
        let mut state = NavState::default();
        for _ in 0..n {
            state = propagate(&state, &s, &BiasState::default(), g);
        }
        let t = n as f64 * dt;
        let v_expected = beta * t;
        let p_expected = 0.5 * beta * t * t;
        assert!((state.velocity.x - v_expected).abs() <= 0.02 * v_expected);
        assert!((state.position.x - p_expected).abs() <= 0.02 * p_expected);
    }

    #[test]
    fn bias_compensation_cancels_bias() {
        let dt = 0.01;
        let bias = BiasState {
            accel: Vec3::new(0.1, -0.2, 0.05),
            gyro: Vec3::new(1e-3, 2e-3, -1e-3),
        };
        let s = ImuSample {
            d_velocity: bias.accel * dt + Vec3::new(0.0, 0.0, STANDARD_GRAVITY * dt),
            d_theta: bias.gyro * dt,
            dt,
        };
        let next = propagate(&NavState::default(), &s, &bias, STANDARD_GRAVITY);
        assert_abs_diff_eq!(next.velocity, Vec3::zeros(), epsilon = 1e-15);
        assert_abs_diff_eq!(next.attitude.to_vector(), Vec3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn propagation_is_deterministic() {
        let s = ImuSample {
            d_velocity: Vec3::new(0.013, -0.002, 0.0981),
            d_theta: Vec3::new(1e-4, -3e-4, 2e-4),
            dt: 0.01,
        };
        let state = NavState {
            position: Vec3::new(5.0, 6.0, 7.0),
            velocity: Vec3::new(20.0, 1.0, 0.0),
            attitude: EulerAngles::new(0.1, -0.05, 1.2),
        };
        let bias = BiasState::default();
        let a = propagate(&state, &s, &bias, STANDARD_GRAVITY);
        let b = propagate(&state, &s, &bias, STANDARD_GRAVITY);
        assert_eq!(a, b);
    }

    #[test]
    fn corrections() {
        let state = NavState {
            position: Vec3::new(1.0, 1.0, 1.0),
            velocity: Vec3::new(3.0, 0.0, 0.0),
            attitude: EulerAngles::new(0.0, 0.0, 0.0),
        };
        let bias = BiasState::default();
        let (s, b) = apply_corrections(&state, &bias, &ErrorState::zeros());
        assert_eq!((s, b), (state, bias));

        let mut x = ErrorState::zeros();
        x.0[0] = 1.0;
        x.0[1] = 2.0;
        x.0[2] = 3.0;
        let (s, b) = apply_corrections(&state, &bias, &x);
        assert_eq!(s.position, Vec3::new(2.0, 3.0, 4.0));
        assert_eq!((s.velocity, s.attitude, b), (state.velocity, state.attitude, bias));

        let mut x = ErrorState::zeros();
        x.0[6] = 0.001;
        x.0[9] = 0.01;
        x.0[14] = -0.002;
        let (s, b) = apply_corrections(&state, &bias, &x);
        assert_abs_diff_eq!(s.attitude.roll, 0.001, epsilon = 1e-9);
        assert_abs_diff_eq!(s.attitude.pitch, 0.0, epsilon = 1e-12);
        assert_eq!(b.accel, Vec3::new(0.01, 0.0, 0.0));
        assert_eq!(b.gyro, Vec3::new(0.0, 0.0, -0.002));
    }
}
