use nalgebra::{DMatrix, DVector};

use super::{FlowCorrespondence, FlowField, ParameterVector, MIN_FEATURES};
use crate::camera::{l_operator, projection_operator, EPS_DEN};
use crate::dtm::{SurfaceContact, TerrainGrid};
use crate::error::{NavError, Result};
use crate::Vec3;

/// Intersects the ray through every first-frame image point with the terrain.
pub fn ground_point_estimates(
    params: &ParameterVector,
    flow: &FlowField,
    grid: &TerrainGrid,
) -> Result<Vec<SurfaceContact>> {
    let pose = params.pose1();
    flow.correspondences
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let dir = pose.rotation * c.u1.homogeneous().vector();
            grid.intersect_ray(pose.position, dir.normalize())
                .map_err(|e| e.for_feature(i))
        })
        .collect()
}

/// Residual of one correspondence: the second-camera position of the terrain point,
/// projected onto the orthogonal complement of the second image ray and divided by
/// its own length.
pub fn residual_one(params: &ParameterVector, corr: &FlowCorrespondence, contact: &SurfaceContact) -> Result<Vec3> {
    let r1 = params.angles1().dcm();
    let r12 = params.angles12().dcm();
    let q1 = corr.u1.homogeneous();
    let q2 = corr.u2.homogeneous();
    let l = l_operator(&q1, &contact.normal, &r1)?;
    let g_c2 = params.p12() + r12 * l * (contact.point - params.p1());
    let norm = g_c2.norm();
    if norm <= EPS_DEN {
        return Err(NavError::VanishingPoint { norm });
    }
    Ok(projection_operator(q2.vector(), q2.vector())? * g_c2 / norm)
}

/// How ground points are obtained at each residual evaluation.
#[derive(Debug, Clone)]
pub(crate) enum GroundPoints {
    /// Ray-trace the DTM from the current parameters.
    Recompute,
    /// Reuse contacts computed once.
    Frozen(Vec<SurfaceContact>),
}

/// The stacked residual as a function of the parameters.
pub(crate) struct ResidualModel<'a> {
    pub flow: &'a FlowField,
    pub grid: &'a TerrainGrid,
    pub ground: GroundPoints,
    /// Replace failing feature blocks by zeros (robust mode) instead of failing.
    pub exclude_failures: bool,
}

impl ResidualModel<'_> {
    pub fn evaluate(&self, params: &ParameterVector) -> Result<DVector<f64>> {
        let n = self.flow.len();
        let mut out = DVector::zeros(3 * n);
        let pose = params.pose1();
        for (i, corr) in self.flow.correspondences.iter().enumerate() {
            let block = match &self.ground {
                GroundPoints::Recompute => {
                    let dir = pose.rotation * corr.u1.homogeneous().vector();
                    self.grid
                        .intersect_ray(pose.position, dir.normalize())
                        .and_then(|contact| residual_one(params, corr, &contact))
                }
                GroundPoints::Frozen(contacts) => residual_one(params, corr, &contacts[i]),
            };
            match block {
                Ok(r) => out.fixed_rows_mut::<3>(3 * i).copy_from(&r),
                Err(e) if self.exclude_failures => {
                    log::debug!("excluding feature {i}: {e}");
                }
                Err(e) => return Err(e.for_feature(i)),
            }
        }
        Ok(out)
    }

    /// Central differences with per-parameter step `fd_step * max(1, |x|)`.
    pub fn jacobian(&self, params: &ParameterVector, fd_step: f64) -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(3 * self.flow.len(), 12);
        for j in 0..12 {
            let h = fd_step * params.0[j].abs().max(1.0);
            let mut plus = *params;
            let mut minus = *params;
            plus.0[j] += h;
            minus.0[j] -= h;
            let col = (self.evaluate(&plus)? - self.evaluate(&minus)?) / (2.0 * h);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }
}

/// Concatenated residuals of all correspondences, ground points ray-traced from
/// `params`.
pub fn stacked_residual(params: &ParameterVector, flow: &FlowField, grid: &TerrainGrid) -> Result<DVector<f64>> {
    if flow.len() < MIN_FEATURES {
        return Err(NavError::TooFewFeatures {
            required: MIN_FEATURES,
            got: flow.len(),
        });
    }
    model(flow, grid).evaluate(params)
}

/// Central-difference Jacobian (3n x 12) of [`stacked_residual`]-style residuals.
/// Works for any feature count so that rank deficiency can be inspected.
pub fn jacobian_fd(params: &ParameterVector, flow: &FlowField, grid: &TerrainGrid, fd_step: f64) -> Result<DMatrix<f64>> {
    model(flow, grid).jacobian(params, fd_step)
}

fn model<'a>(flow: &'a FlowField, grid: &'a TerrainGrid) -> ResidualModel<'a> {
    ResidualModel {
        flow,
        grid,
        ground: GroundPoints::Recompute,
        exclude_failures: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    /// Ratio of extreme singular values of the column-equilibrated Jacobian.
    pub condition: f64,
}

/// Numerical rank of a Jacobian after scaling every column to unit norm, so that
/// meters and radians are compared on an equal footing.
pub fn jacobian_rank(jac: &DMatrix<f64>, tolerance: f64) -> RankReport {
    let mut scaled = jac.clone();
    for mut col in scaled.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    if !(max > 0.0) {
        return RankReport {
            rank: 0,
            condition: f64::INFINITY,
        };
    }
    let rank = sv.iter().filter(|s| **s > tolerance * max).count();
    let min = sv.min();
    RankReport {
        rank,
        condition: if min > 0.0 { max / min } else { f64::INFINITY },
    }
}
