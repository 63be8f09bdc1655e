use std::f64::consts::TAU;

use super::config::TrajectorySpec;
use crate::attitude::{euler_of_unchecked, EulerAngles};
use crate::ins::NavState;
use crate::{Mat3, Vec3};

/// Ground-truth flight path: constant altitude and speed, piecewise-constant turn
/// rate, with a slow roll/pitch oscillation. Yaw keeps the body x axis on the
/// direction of travel.
#[derive(Debug, Clone)]
pub struct Trajectory {
    speed: f64,
    altitude: f64,
    wobble: f64,
    wobble_period: f64,
    /// (start time, start x, start y, start heading, turn rate)
    segments: Vec<(f64, f64, f64, f64, f64)>,
}

/// Truth at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub dcm: Mat3,
}

impl TruthSample {
    pub fn nav_state(&self) -> NavState {
        NavState {
            position: self.position,
            velocity: self.velocity,
            attitude: euler_of_unchecked(&self.dcm),
        }
    }
}

impl Trajectory {
    pub fn new(spec: &TrajectorySpec) -> Self {
        let mut segments = Vec::new();
        let (mut t, mut x, mut y, mut heading) = (0.0, spec.start[0], spec.start[1], spec.heading);
        let rates: Vec<f64> = if spec.turn_rates.is_empty() {
            vec![0.0]
        } else {
            spec.turn_rates.clone()
        };
        for (i, rate) in rates.iter().enumerate() {
            segments.push((t, x, y, heading, *rate));
            if let Some(d) = spec.segment_durations.get(i) {
                let (nx, ny, nh) = advance(x, y, heading, *rate, spec.speed, *d);
                (x, y, heading) = (nx, ny, nh);
                t += d;
            }
        }
        Self {
            speed: spec.speed,
            altitude: spec.start[2],
            wobble: spec.attitude_wobble,
            wobble_period: spec.wobble_period,
            segments,
        }
    }

    pub fn sample(&self, t: f64) -> TruthSample {
        let idx = self
            .segments
            .iter()
            .rposition(|s| s.0 <= t)
            .unwrap_or(0);
        let (t0, x0, y0, h0, rate) = self.segments[idx];
        let (x, y, heading) = advance(x0, y0, h0, rate, self.speed, t - t0);
        let velocity = Vec3::new(heading.cos(), heading.sin(), 0.0) * self.speed;
        let w = TAU * t / self.wobble_period;
        let attitude = EulerAngles::new(self.wobble * w.sin(), 0.5 * self.wobble * w.cos(), -heading);
        TruthSample {
            t,
            position: Vec3::new(x, y, self.altitude),
            velocity,
            dcm: attitude.dcm(),
        }
    }
}

fn advance(x: f64, y: f64, heading: f64, rate: f64, speed: f64, dt: f64) -> (f64, f64, f64) {
    let h = heading + rate * dt;
    if rate.abs() < 1e-12 {
        (x + speed * dt * heading.cos(), y + speed * dt * heading.sin(), h)
    } else {
        let r = speed / rate;
        (x + r * (h.sin() - heading.sin()), y - r * (h.cos() - heading.cos()), h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn position_is_continuous_and_velocity_consistent() {
        let traj = Trajectory::new(&TrajectorySpec::default());
        for t in [0.0, 12.3, 29.999, 30.0, 30.001, 45.0, 79.0, 99.0] {
            let a = traj.sample(t);
            let b = traj.sample(t + 1e-6);
            let fd = (b.position - a.position) / 1e-6;
            assert_abs_diff_eq!(fd, a.velocity, epsilon = 1e-4);
        }
    }

    #[test]
    fn body_x_follows_velocity_when_level() {
        let spec = TrajectorySpec {
            attitude_wobble: 0.0,
            heading: 0.7,
            ..Default::default()
        };
        let s = Trajectory::new(&spec).sample(3.0);
        let nose = s.dcm * Vec3::x();
        assert_abs_diff_eq!(nose * spec.speed, s.velocity, epsilon = 1e-12);
    }
}
