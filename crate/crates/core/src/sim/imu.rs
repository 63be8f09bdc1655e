use rand::Rng;
use rand_distr::StandardNormal;

use super::config::ImuSpec;
use super::trajectory::Trajectory;
use crate::attitude::small_rotation_angle;
use crate::ins::ImuSample;
use crate::Vec3;

pub(crate) fn gaussian3<R: Rng>(rng: &mut R, sigma: f64) -> Vec3 {
    if sigma == 0.0 {
        return Vec3::zeros();
    }
    Vec3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * sigma
}

/// IMU increments over `[k dt, (k+1) dt)` for `k < n_steps`.
///
/// The noise-free increments invert [`crate::ins::propagate`] exactly: the angle
/// increment is the frame rotation between consecutive truth attitudes, and the
/// velocity increment is the truth velocity change plus the gravity reaction,
/// expressed in the body frame at the end of the interval. Bias and noise are added
/// on top.
pub fn synth_imu<R: Rng>(
    trajectory: &Trajectory,
    spec: &ImuSpec,
    gravity: f64,
    n_steps: usize,
    rng: &mut R,
) -> Vec<ImuSample> {
    let dt = 1.0 / spec.rate;
    let accel_bias = Vec3::from(spec.accel_bias);
    let gyro_bias = Vec3::from(spec.gyro_bias);
    let mut prev = trajectory.sample(0.0);
    (0..n_steps)
        .map(|k| {
            let next = trajectory.sample((k + 1) as f64 * dt);
            let d_theta = small_rotation_angle(&(prev.dcm.transpose() * next.dcm));
            let dv_l = next.velocity - prev.velocity + Vec3::new(0.0, 0.0, gravity * dt);
            let d_velocity = next.dcm.transpose() * dv_l;
            prev = next;
            ImuSample {
                d_velocity: d_velocity + accel_bias * dt + gaussian3(rng, spec.accel_noise * dt),
                d_theta: d_theta + gyro_bias * dt + gaussian3(rng, spec.gyro_noise * dt.sqrt()),
                dt,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ins::{propagate, BiasState, STANDARD_GRAVITY};
    use crate::sim::config::TrajectorySpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clean(rate: f64) -> ImuSpec {
        ImuSpec {
            rate,
            accel_noise: 0.0,
            gyro_noise: 0.0,
            accel_bias: [0.0; 3],
            gyro_bias: [0.0; 3],
        }
    }

    fn final_error(traj: &Trajectory, spec: &ImuSpec, duration: f64) -> f64 {
        let n = (duration * spec.rate).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let samples = synth_imu(traj, spec, STANDARD_GRAVITY, n, &mut rng);
        let mut state = traj.sample(0.0).nav_state();
        for s in &samples {
            state = propagate(&state, s, &BiasState::default(), STANDARD_GRAVITY);
        }
        (state.position - traj.sample(duration).position).norm()
    }

    #[test]
    fn straight_level_flight_is_reproduced() {
        let spec = TrajectorySpec {
            turn_rates: vec![0.0],
            segment_durations: vec![60.0],
            attitude_wobble: 0.0,
            ..Default::default()
        };
        let err = final_error(&Trajectory::new(&spec), &clean(100.0), 60.0);
        assert!(err < 1e-9, "error {err}");
    }

    #[test]
    fn integration_error_is_second_order() {
        let spec = TrajectorySpec {
            turn_rates: vec![0.1],
            segment_durations: vec![60.0],
            ..Default::default()
        };
        let traj = Trajectory::new(&spec);
        let coarse = final_error(&traj, &clean(50.0), 60.0);
        let fine = final_error(&traj, &clean(100.0), 60.0);
        let ratio = coarse / fine;
        assert!(coarse < 1e-2, "coarse error {coarse}");
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn constant_accel_bias_drifts_quadratically() {
        let spec = TrajectorySpec {
            turn_rates: vec![0.0],
            segment_durations: vec![30.0],
            attitude_wobble: 0.0,
            ..Default::default()
        };
        let imu = ImuSpec {
            accel_bias: [0.01, 0.0, 0.0],
            ..clean(100.0)
        };
        let err = final_error(&Trajectory::new(&spec), &imu, 30.0);
        let expected = 0.5 * 0.01 * 30.0 * 30.0;
        assert!((err - expected).abs() < 0.02 * expected, "{err} vs {expected}");
    }

    #[test]
    fn same_seed_same_stream() {
        let traj = Trajectory::new(&TrajectorySpec::default());
        let spec = ImuSpec::default();
        let a = synth_imu(&traj, &spec, 9.8, 200, &mut ChaCha8Rng::seed_from_u64(3));
        let b = synth_imu(&traj, &spec, 9.8, 200, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }
}
