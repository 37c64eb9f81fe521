//! Set distances between point clouds and manifolds, and plug-in smoothness
//! diagnostics for a sampled manifold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descent::PointCloud;
use crate::error::{Error, Result};
use crate::generator::{GeneratorSpec, Vector};
use crate::linalg::{min_norm_solve, orthogonal_remainder, row_space_basis, smallest_singular_value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearestPoint {
    pub distance: f64,
    pub index: usize,
}

/// `d(x, A)` over a finite cloud; ties go to the smallest index.
pub fn dist_to_cloud(x: &Vector, cloud: &[Vector]) -> Result<NearestPoint> {
    let mut best: Option<(f64, usize)> = None;
    for (i, y) in cloud.iter().enumerate() {
        let d2 = (x - y).norm_squared();
        if best.is_none_or(|(b, _)| d2 < b) {
            best = Some((d2, i));
        }
    }
    best.map(|(d2, index)| NearestPoint {
        distance: d2.sqrt(),
        index,
    })
    .ok_or(Error::EmptyCloud)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudDistanceReport {
    /// `sup_{x∈A} d(x, B)`
    pub forward_sup: f64,
    /// `sup_{y∈B} d(y, A)`
    pub backward_sup: f64,
    pub hausdorff: f64,
}

impl CloudDistanceReport {
    fn new(forward_sup: f64, backward_sup: f64) -> Self {
        Self {
            forward_sup,
            backward_sup,
            hausdorff: forward_sup.max(backward_sup),
        }
    }
}

fn directed_sup(a: &[Vector], b: &[Vector]) -> f64 {
    a.par_iter()
        .map(|x| {
            b.iter()
                .map(|y| (x - y).norm_squared())
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
        .sqrt()
}

/// Hausdorff distance between two finite clouds, with both directed components.
pub fn hausdorff(a: &[Vector], b: &[Vector]) -> Result<CloudDistanceReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(CloudDistanceReport::new(directed_sup(a, b), directed_sup(b, a)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub sigma_min: f64,
    /// `σ_min / 2`, the normal-curvature constant implied by the singular-value bound.
    pub lambda0_hat: f64,
    pub per_point_sigmas: Vec<f64>,
    /// Some point had a Jacobian singular value below `1e-10`.
    pub rank_deficient: bool,
}

/// Smallest Jacobian singular value at every cloud point.
pub fn estimate_smoothness(g: &GeneratorSpec, cloud: &PointCloud) -> Result<SmoothnessReport> {
    smoothness_of_points(g, &cloud.points)
}

pub fn smoothness_of_points(g: &GeneratorSpec, points: &[Vector]) -> Result<SmoothnessReport> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let per_point_sigmas = points
        .par_iter()
        .map(|p| g.eval_jacobian(p).map(|j| smallest_singular_value(&j)))
        .collect::<Result<Vec<f64>>>()?;
    let sigma_min = per_point_sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SmoothnessReport {
        sigma_min,
        lambda0_hat: sigma_min / 2.0,
        rank_deficient: sigma_min < crate::linalg::RANK_TOL,
        per_point_sigmas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    /// Residual target for the return-to-manifold Newton iterations.
    pub residual_tol: f64,
    /// Stop once the tangential part of `x − y` is below this.
    pub tangent_tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-13,
            tangent_tol: 1e-11,
            max_iter: 200,
        }
    }
}

/// Foot point of `x` on `{Ψ = 0}`: the manifold point `y` with `x − y` normal to
/// the manifold at `y`.
///
/// Alternates minimum-norm Newton corrections `y ← y − J⁺Ψ(y)` with tangential
/// moves toward `x`. Rank-deficient Jacobians are handled by the truncated
/// pseudo-inverse.
pub fn project_to_manifold(g: &GeneratorSpec, x: &Vector, cfg: &ProjectionConfig) -> Result<Vector> {
    let mut y = x.clone();
    for _ in 0..cfg.max_iter {
        for _ in 0..50 {
            let psi = g.eval_psi(&y)?;
            if psi.amax() <= cfg.residual_tol {
                break;
            }
            let jac = g.eval_jacobian(&y)?;
            y -= min_norm_solve(&jac, &psi);
        }
        let jac = g.eval_jacobian(&y)?;
        let tangential = orthogonal_remainder(&row_space_basis(&jac), &(x - &y));
        if tangential.norm() <= cfg.tangent_tol {
            return Ok(y);
        }
        y += tangential;
    }
    Err(Error::NotConverged {
        outer_iters: cfg.max_iter,
        reason: "projection onto manifold did not settle".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldDistanceReport {
    pub distances: CloudDistanceReport,
    /// Points whose foot point left the generator's domain or did not settle.
    pub skipped_forward: usize,
    pub skipped_backward: usize,
}

fn directed_projected_sup(a: &[Vector], target: &GeneratorSpec, cfg: &ProjectionConfig) -> (f64, usize) {
    let dists: Vec<Option<f64>> = a
        .par_iter()
        .map(|x| project_to_manifold(target, x, cfg).ok().map(|y| (x - y).norm()))
        .collect();
    let skipped = dists.iter().filter(|d| d.is_none()).count();
    let sup = dists.into_iter().flatten().fold(0.0, f64::max);
    (sup, skipped)
}

/// Hausdorff distance between two solution manifolds, estimated from a sample
/// of each: every sample point is projected onto the other manifold, so only
/// the sup is discretized, not the distance itself.
pub fn projected_hausdorff(
    a: &[Vector],
    manifold_a: &GeneratorSpec,
    b: &[Vector],
    manifold_b: &GeneratorSpec,
    cfg: &ProjectionConfig,
) -> Result<ManifoldDistanceReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (forward, skipped_forward) = directed_projected_sup(a, manifold_b, cfg);
    let (backward, skipped_backward) = directed_projected_sup(b, manifold_a, cfg);
    Ok(ManifoldDistanceReport {
        distances: CloudDistanceReport::new(forward, backward),
        skipped_forward,
        skipped_backward,
    })
}
