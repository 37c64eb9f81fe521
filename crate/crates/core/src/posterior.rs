//! Weighted point-cloud approximation of a posterior supported on a manifold.
//!
//! Each manifold point `Z_i` gets a kernel density score `ρ̂_i` (how densely the
//! sampler covered that region) and an unnormalized posterior score `π̂_i`. The
//! importance weight `ω̂_i = π̂_i / ρ̂_i` corrects for the sampler's non-uniform
//! coverage. Everything is kept in log space: likelihood products over
//! hundreds of observations underflow otherwise.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Vector;

pub type LogScoreFn = dyn Fn(&Vector) -> Result<f64> + Send + Sync;

/// Unnormalized log prior `log ρ(θ)` with `ρ ∝ π`.
#[derive(Clone)]
pub struct PriorSpec {
    log_score: Arc<LogScoreFn>,
}

impl fmt::Debug for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PriorSpec")
    }
}

impl PriorSpec {
    pub fn new<F>(log_score: F) -> Self
    where
        F: Fn(&Vector) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            log_score: Arc::new(log_score),
        }
    }

    pub fn flat() -> Self {
        Self::new(|_| Ok(0.0))
    }

    /// Product of independent normal densities `Π_j φ(θ_j; mean_j, sd_j)`, up to a constant.
    pub fn gaussian_product(means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if means.len() != sds.len() || sds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameters(
                "gaussian prior needs one positive sd per mean".into(),
            ));
        }
        Ok(Self::new(move |x| {
            if x.len() != means.len() {
                return Err(Error::DimensionMismatch {
                    expected: means.len(),
                    got: x.len(),
                });
            }
            Ok(x.iter()
                .zip(means.iter().zip(&sds))
                .map(|(v, (m, s))| {
                    let z = (v - m) / s;
                    -0.5 * z * z - s.ln()
                })
                .sum())
        }))
    }

    pub fn log_score(&self, x: &Vector) -> Result<f64> {
        (self.log_score)(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointCloud {
    pub points: Vec<Vector>,
    pub rho: Vec<f64>,
    pub log_pi: Vec<f64>,
    pub log_omega: Vec<f64>,
    pub bandwidth: f64,
}

impl WeightedPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weights `exp(log ω_i − max_j log ω_j)`; the largest is exactly 1.
    pub fn relative_weights(&self) -> Vec<f64> {
        let max = self.log_omega.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.log_omega.iter().map(|w| (w - max).exp()).collect()
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        let w = self.relative_weights();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

#[inline]
fn gaussian_kernel(sq_dist: f64, h: f64) -> f64 {
    (-0.5 * sq_dist / (h * h)).exp()
}

/// `ρ̂_i = N⁻¹ Σ_j K(‖Z_i − Z_j‖ / h)` with the unnormalized Gaussian kernel,
/// self-term included.
pub fn density_scores(points: &[Vector], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::NonPositiveBandwidth(h));
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let n = points.len() as f64;
    Ok(points
        .par_iter()
        .map(|zi| {
            points
                .iter()
                .map(|zj| gaussian_kernel((zi - zj).norm_squared(), h))
                .sum::<f64>()
                / n
        })
        .collect())
}

/// Rule-of-thumb bandwidth `σ̄ · (4 / ((d+2) N))^{1/(d+4)}`, where `σ̄` is the
/// mean of the per-coordinate sample standard deviations.
pub fn silverman_bandwidth(points: &[Vector]) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateCloud);
    }
    let d = points[0].len();
    let mean = points.iter().fold(Vector::zeros(d), |acc, p| acc + p) / n as f64;
    let mut var = Vector::zeros(d);
    for p in points {
        let diff = p - &mean;
        var += diff.component_mul(&diff);
    }
    let sigma_bar = (var / (n as f64 - 1.0)).map(f64::sqrt).mean();
    if !(sigma_bar > 0.0) {
        return Err(Error::DegenerateCloud);
    }
    let (d, n) = (d as f64, n as f64);
    Ok(sigma_bar * (4.0 / ((d + 2.0) * n)).powf(1.0 / (d + 4.0)))
}

/// Scores each point: `log π̂ = log prior + log-likelihood`, `log ω = log π̂ − log ρ̂`.
pub fn posterior_weights<L>(
    points: &[Vector],
    prior: &PriorSpec,
    loglik: L,
    h: f64,
) -> Result<WeightedPointCloud>
where
    L: Fn(&Vector) -> Result<f64> + Sync,
{
    let rho = density_scores(points, h)?;
    let log_pi = points
        .par_iter()
        .enumerate()
        .map(|(index, z)| {
            let score = prior.log_score(z)? + loglik(z)?;
            if score.is_finite() {
                Ok(score)
            } else {
                Err(Error::NonFiniteScore { index })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let log_omega = log_pi.iter().zip(&rho).map(|(lp, r)| lp - r.ln()).collect();
    Ok(WeightedPointCloud {
        points: points.to_vec(),
        rho,
        log_pi,
        log_omega,
        bandwidth: h,
    })
}

/// Importance-weighted average; it need not lie on the manifold.
pub fn posterior_mean(w: &WeightedPointCloud) -> Result<Vector> {
    let first = w.points.first().ok_or(Error::EmptyCloud)?;
    let weights = w.normalized_weights();
    Ok(w.points
        .iter()
        .zip(&weights)
        .fold(Vector::zeros(first.len()), |acc, (p, wi)| acc + p * *wi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub point: Vec<f64>,
    pub index: usize,
}

fn argmax_first(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Cloud point with the largest posterior score; ties go to the smallest index.
pub fn map_estimate(w: &WeightedPointCloud) -> Result<CloudPoint> {
    let index = argmax_first(w.log_pi.iter().copied()).ok_or(Error::EmptyCloud)?;
    Ok(CloudPoint {
        point: w.points[index].as_slice().to_vec(),
        index,
    })
}

/// Cloud point minimizing `Σ_j ω_j ‖Z_i − Z_j‖²`; ties go to the smallest index.
pub fn frechet_mean(w: &WeightedPointCloud) -> Result<CloudPoint> {
    if w.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let weights = w.normalized_weights();
    let costs: Vec<f64> = w
        .points
        .par_iter()
        .map(|zi| {
            w.points
                .iter()
                .zip(&weights)
                .map(|(zj, wj)| wj * (zi - zj).norm_squared())
                .sum()
        })
        .collect();
    let index = argmax_first(costs.iter().map(|c| -c)).ok_or(Error::EmptyCloud)?;
    Ok(CloudPoint {
        point: w.points[index].as_slice().to_vec(),
        index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleRegion {
    pub level: f64,
    /// Indices ordered by decreasing posterior score.
    pub member_indices: Vec<usize>,
    /// Posterior score of the last member; new points with a score at least
    /// this high belong to the level-set form of the region.
    pub cutoff_log_pi: f64,
}

impl CredibleRegion {
    pub fn contains(&self, index: usize) -> bool {
        self.member_indices.contains(&index)
    }
}

/// Indices sorted by decreasing `log π̂`, stable in the original index.
pub fn posterior_order(w: &WeightedPointCloud) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        w.log_pi[b]
            .partial_cmp(&w.log_pi[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Smallest prefix of the posterior ordering whose weight share reaches `1 − α`.
pub fn credible_region(w: &WeightedPointCloud, alpha: f64) -> Result<CredibleRegion> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameters(format!(
            "credible level alpha must lie in (0,1), got {alpha}"
        )));
    }
    if w.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let weights = w.relative_weights();
    let total: f64 = weights.iter().sum();
    let target = (1.0 - alpha) * total;
    let order = posterior_order(w);
    let mut cumulative = 0.0;
    let mut len = order.len();
    for (i, &idx) in order.iter().enumerate() {
        cumulative += weights[idx];
        if cumulative >= target {
            len = i + 1;
            break;
        }
    }
    let member_indices = order[..len].to_vec();
    let cutoff_log_pi = w.log_pi[member_indices[len - 1]];
    Ok(CredibleRegion {
        level: alpha,
        member_indices,
        cutoff_log_pi,
    })
}
