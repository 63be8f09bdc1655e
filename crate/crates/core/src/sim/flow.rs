use rand::Rng;
use rand_distr::StandardNormal;

use crate::camera::{project, world_to_camera, ImagePoint, Pose, RelativeMotion};
use crate::dtm::TerrainGrid;
use crate::error::{NavError, Result};
use crate::pose_solver::{FlowCorrespondence, FlowField};
use crate::Vec2;

/// Synthesizes `n` correspondences between the first camera and the camera reached
/// by `motion`.
///
/// Image locations are spread over a jittered square grid covering
/// `[-fov_half_width, fov_half_width]^2`, falling back to uniform random locations
/// when too few grid rays yield usable features. Each ray is traced to the terrain
/// and the hit is projected into both cameras; Gaussian noise of `pixel_sigma` is
/// then added to all four image coordinates.
pub fn synth_flow<R: Rng>(
    pose1: &Pose,
    motion: &RelativeMotion,
    grid: &TerrainGrid,
    n: usize,
    pixel_sigma: f64,
    fov_half_width: f64,
    rng: &mut R,
) -> Result<FlowField> {
    let pose2 = pose1.compose(motion);
    let side = (n as f64).sqrt().ceil() as usize;
    let cell = 2.0 * fov_half_width / side as f64;

    let mut candidates: Vec<Vec2> = Vec::with_capacity(side * side);
    for row in 0..side {
        for col in 0..side {
            let jx: f64 = rng.random_range(-0.4..0.4);
            let jy: f64 = rng.random_range(-0.4..0.4);
            candidates.push(Vec2::new(
                -fov_half_width + (col as f64 + 0.5 + jx) * cell,
                -fov_half_width + (row as f64 + 0.5 + jy) * cell,
            ));
        }
    }

    let mut clean = Vec::with_capacity(n);
    let try_point = |u: Vec2| -> Option<FlowCorrespondence> {
        let ray = pose1.rotation * ImagePoint(u).homogeneous().vector();
        let contact = grid.intersect_ray(pose1.position, ray.normalize()).ok()?;
        let u1 = project(&world_to_camera(pose1, &contact.point)).ok()?;
        let u2 = project(&world_to_camera(&pose2, &contact.point)).ok()?;
        Some(FlowCorrespondence { u1, u2 })
    };
    for u in candidates {
        if clean.len() == n {
            break;
        }
        if let Some(c) = try_point(u) {
            clean.push(c);
        }
    }
    let mut attempts = 0;
    while clean.len() < n && attempts < 20 * n {
        attempts += 1;
        let u = Vec2::new(
            rng.random_range(-fov_half_width..fov_half_width),
            rng.random_range(-fov_half_width..fov_half_width),
        );
        if let Some(c) = try_point(u) {
            clean.push(c);
        }
    }
    if clean.len() < n {
        return Err(NavError::Scenario(format!(
            "only {} of {n} requested features are visible from both cameras",
            clean.len()
        )));
    }

    let mut noisy = |p: ImagePoint| -> ImagePoint {
        if pixel_sigma == 0.0 {
            return p;
        }
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        ImagePoint::new(p.x() + pixel_sigma * nx, p.y() + pixel_sigma * ny)
    };
    let correspondences = clean
        .into_iter()
        .map(|c| FlowCorrespondence {
            u1: noisy(c.u1),
            u2: noisy(c.u2),
        })
        .collect();
    Ok(FlowField::new(correspondences))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Pose;
    use crate::{Mat3, Vec3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (TerrainGrid, Pose) {
        let grid = TerrainGrid::from_fn(-500.0, -500.0, 5.0, 201, 201, |x, y| 3.0 * (x / 40.0).sin() + 2.0 * (y / 60.0).cos()).unwrap();
        let pose = Pose::new(Vec3::new(0.0, 0.0, 100.0), Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)));
        (grid, pose)
    }

    #[test]
    fn zero_motion_gives_identical_points() {
        let (grid, pose) = setup();
        let still = RelativeMotion {
            translation: Vec3::zeros(),
            rotation: Mat3::identity(),
        };
        let flow = synth_flow(&pose, &still, &grid, 10, 0.0, 0.4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(flow.len(), 10);
        for c in &flow.correspondences {
            assert!((c.u1.0 - c.u2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn feature_count_is_exact() {
        let (grid, pose) = setup();
        let motion = RelativeMotion {
            translation: Vec3::new(-20.0, 0.0, 0.0),
            rotation: Mat3::identity(),
        };
        for n in [7, 9, 10, 16, 30] {
            let flow = synth_flow(&pose, &motion, &grid, n, 1e-3, 0.4, &mut ChaCha8Rng::seed_from_u64(n as u64)).unwrap();
            assert_eq!(flow.len(), n);
        }
    }

    #[test]
    fn camera_off_the_map_is_a_scenario_error() {
        let (grid, _) = setup();
        let pose = Pose::new(Vec3::new(0.0, 0.0, 100.0), Mat3::identity());
        let motion = RelativeMotion {
            translation: Vec3::zeros(),
            rotation: Mat3::identity(),
        };
        let out = synth_flow(&pose, &motion, &grid, 7, 0.0, 0.4, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(out, Err(NavError::Scenario(_))));
    }
}
