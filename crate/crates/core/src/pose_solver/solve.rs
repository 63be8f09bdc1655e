use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use super::residual::{ground_point_estimates, jacobian_rank, GroundPoints, RankReport, ResidualModel};
use super::{FlowField, ParameterVector, PoseMotionEstimate, RobustLoss, SolverConfig, MIN_FEATURES};
use crate::dtm::TerrainGrid;
use crate::error::{NavError, Result};

type Normal = SMatrix<f64, 12, 12>;
type Gradient = SVector<f64, 12>;

/// Per-feature IRLS weights for the current residual.
fn weights(r: &DVector<f64>, loss: RobustLoss) -> Vec<f64> {
    let n = r.len() / 3;
    match loss {
        RobustLoss::None => vec![1.0; n],
        RobustLoss::Huber { threshold } => (0..n)
            .map(|i| {
                let e = r.fixed_rows::<3>(3 * i).norm();
                if e <= threshold {
                    1.0
                } else {
                    threshold / e
                }
            })
            .collect(),
    }
}

fn cost(r: &DVector<f64>, loss: RobustLoss) -> f64 {
    match loss {
        RobustLoss::None => 0.5 * r.norm_squared(),
        RobustLoss::Huber { threshold } => (0..r.len() / 3)
            .map(|i| {
                let e = r.fixed_rows::<3>(3 * i).norm();
                if e <= threshold {
                    0.5 * e * e
                } else {
                    threshold * (e - 0.5 * threshold)
                }
            })
            .sum(),
    }
}

/// Weighted normal equations `J^T W J` and `J^T W r`.
fn normal_equations(jac: &DMatrix<f64>, r: &DVector<f64>, w: &[f64]) -> (Normal, Gradient) {
    let mut a = Normal::zeros();
    let mut g = Gradient::zeros();
    for (i, wi) in w.iter().enumerate() {
        let rows = jac.rows(3 * i, 3);
        let ri = r.rows(3 * i, 3);
        a += (rows.transpose() * rows) * *wi;
        g += (rows.transpose() * ri) * *wi;
    }
    (a, g)
}

/// Solves `a dx = -g` through an SVD, discarding directions below rounding level.
fn solve_step(a: &Normal, g: &Gradient) -> Option<Gradient> {
    let svd = a.svd(true, true);
    let eps = svd.singular_values.max() * 12.0 * f64::EPSILON;
    svd.solve(&(-g), eps).ok()
}

/// Scales `dx` down uniformly so that no position block exceeds `max_pos` and no
/// angle block exceeds `max_ang`.
fn clamp_step(dx: Gradient, max_pos: f64, max_ang: f64) -> Gradient {
    let mut scale = 1.0f64;
    for (start, cap) in [(0, max_pos), (3, max_ang), (6, max_pos), (9, max_ang)] {
        let n = dx.fixed_rows::<3>(start).norm();
        if n > cap {
            scale = scale.min(cap / n);
        }
    }
    dx * scale
}

fn median_viewing_distance(x: &ParameterVector, flow: &FlowField, grid: &TerrainGrid) -> Option<f64> {
    let contacts = ground_point_estimates(x, flow, grid).ok()?;
    let mut d: Vec<f64> = contacts.iter().map(|c| (c.point - x.p1()).norm()).collect();
    d.sort_by(f64::total_cmp);
    d.get(d.len() / 2).copied()
}

fn cost_settled(previous: f64, current: f64, tol: f64) -> bool {
    (previous - current).abs() <= tol * previous
}

fn step_is_small(dx: &Gradient, x: &ParameterVector, tol: f64) -> bool {
    dx.norm() <= tol * (x.0.norm() + tol)
}

/// Estimates pose and ego-motion from `flow`, starting at `initial`.
///
/// The solve stops when the residual norm, the step, or the relative change of the
/// cost over an accepted step falls below its tolerance.
///
/// Every step is shortened, if necessary, so that positions move by at most
/// `max_step_fraction` of the median viewing distance and angles by at most
/// `max_step_fraction` radians; the tangent-plane linearization says nothing about
/// terrain further away. Gauss-Newton steps that do not decrease the robust cost are rejected; after
/// `gn_stall_window` consecutive rejections, Levenberg-Marquardt with
/// Marquardt scaling takes over for the rest of the solve. Fewer than
/// [`MIN_FEATURES`] correspondences, or (unless the initial residual is already
/// within tolerance) a Jacobian rank below twelve at the initial point, is reported
/// as degenerate geometry together with the observed rank. Running out of iterations is not an
/// error and yields `converged == false`.
pub fn solve(
    initial: &ParameterVector,
    flow: &FlowField,
    grid: &TerrainGrid,
    config: &SolverConfig,
) -> Result<PoseMotionEstimate> {
    config.validate()?;
    if flow.is_empty() {
        return Err(NavError::DegenerateGeometry {
            rank: 0,
            condition: f64::INFINITY,
        });
    }
    let ground = if config.frozen_ground_points {
        GroundPoints::Frozen(ground_point_estimates(initial, flow, grid)?)
    } else {
        GroundPoints::Recompute
    };
    let model = ResidualModel {
        flow,
        grid,
        ground,
        exclude_failures: matches!(config.robust_loss, RobustLoss::Huber { .. }),
    };
    let loss = config.robust_loss;

    let mut x = *initial;
    let mut r = model.evaluate(&x)?;
    let mut jac = model.jacobian(&x, config.fd_step)?;
    let initial_rank = jacobian_rank(&jac, config.rank_tolerance);
    if flow.len() >= MIN_FEATURES && r.norm() <= config.residual_tolerance {
        return Ok(estimate(x, &r, initial_rank, true, 0, false));
    }
    if flow.len() < MIN_FEATURES || initial_rank.rank < 12 {
        return Err(NavError::DegenerateGeometry {
            rank: initial_rank.rank,
            condition: initial_rank.condition,
        });
    }
    let mut current_cost = cost(&r, loss);
    let depth = median_viewing_distance(&x, flow, grid).unwrap_or(f64::INFINITY);
    let (max_pos, max_ang) = (config.max_step_fraction * depth, config.max_step_fraction);

    let mut use_lm = false;
    let mut stall = 0usize;
    let mut lambda = config.lm_lambda_init;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut jac_at_x = true;
    let mut settled = false;

    while iterations < config.max_iterations {
        if r.norm() <= config.residual_tolerance {
            converged = true;
            break;
        }
        if !jac_at_x {
            jac = model.jacobian(&x, config.fd_step)?;
            jac_at_x = true;
        }
        iterations += 1;
        let w = weights(&r, loss);
        let (a, g) = normal_equations(&jac, &r, &w);

        if !use_lm {
            let Some(dx) = solve_step(&a, &g) else {
                break;
            };
            let dx = clamp_step(dx, max_pos, max_ang);
            let candidate = ParameterVector(x.0 + dx);
            match model.evaluate(&candidate) {
                Ok(r_new) => {
                    let c = cost(&r_new, loss);
                    if c < current_cost {
                        stall = 0;
                        settled = cost_settled(current_cost, c, config.cost_tolerance);
                        x = candidate;
                        r = r_new;
                        current_cost = c;
                        jac_at_x = false;
                    } else {
                        stall += 1;
                    }
                }
                Err(e) => {
                    log::debug!("Gauss-Newton step left the valid region: {e}");
                    stall += 1;
                }
            }
            if settled || step_is_small(&dx, &x, config.step_tolerance) {
                converged = true;
                break;
            }
            if stall >= config.gn_stall_window {
                log::debug!("Gauss-Newton stalled after {iterations} iterations; switching to LM");
                use_lm = true;
            }
        } else {
            let mut damped = a;
            for i in 0..12 {
                damped[(i, i)] += lambda * a[(i, i)].max(f64::MIN_POSITIVE);
            }
            let Some(dx) = solve_step(&damped, &g) else {
                break;
            };
            let dx = clamp_step(dx, max_pos, max_ang);
            let candidate = ParameterVector(x.0 + dx);
            let accepted = match model.evaluate(&candidate) {
                Ok(r_new) => {
                    let c = cost(&r_new, loss);
                    if c < current_cost {
                        settled = cost_settled(current_cost, c, config.cost_tolerance);
                        x = candidate;
                        r = r_new;
                        current_cost = c;
                        jac_at_x = false;
                        true
                    } else {
                        false
                    }
                }
                Err(_) => false,
            };
            if accepted {
                lambda /= config.lm_lambda_factor;
            } else {
                lambda *= config.lm_lambda_factor;
            }
            if settled || step_is_small(&dx, &x, config.step_tolerance) {
                converged = true;
                break;
            }
        }
    }
    if !converged && r.norm() <= config.residual_tolerance {
        converged = true;
    }
    if !jac_at_x {
        jac = model.jacobian(&x, config.fd_step)?;
    }
    let report = jacobian_rank(&jac, config.rank_tolerance);
    Ok(estimate(x, &r, report, converged, iterations, use_lm))
}

fn estimate(
    x: ParameterVector,
    r: &DVector<f64>,
    report: RankReport,
    converged: bool,
    iterations: usize,
    switched_to_lm: bool,
) -> PoseMotionEstimate {
    let params = x.wrapped();
    PoseMotionEstimate {
        pose1: params.pose1(),
        motion: params.motion(),
        params,
        converged,
        iterations,
        final_residual_norm: r.norm(),
        jacobian_rank: report.rank,
        condition_number: report.condition,
        switched_to_lm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_scales_the_whole_step() {
        let mut dx = Gradient::zeros();
        dx[0] = 30.0;
        dx[4] = 0.05;
        let c = clamp_step(dx, 10.0, 0.1);
        assert!((c[0] - 10.0).abs() < 1e-12);
        assert!((c[4] - 0.05 / 3.0).abs() < 1e-12);
        assert_eq!(clamp_step(dx, 100.0, 1.0), dx);

        dx[10] = 0.4;
        let c = clamp_step(dx, 100.0, 0.1);
        assert!((c.fixed_rows::<3>(9).norm() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn settled_cost_is_relative() {
        assert!(cost_settled(1.0, 1.0 - 1e-7, 1e-6));
        assert!(!cost_settled(1.0, 0.5, 1e-6));
        assert!(cost_settled(0.0, 0.0, 1e-6));
    }
}
