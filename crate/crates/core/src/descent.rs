//! Monte Carlo gradient descent: random initialization, fixed-step descent of
//! `f = ΨᵀΛΨ`, and rejection of limits whose residual is not small.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{GeneratorSpec, Vector, WeightMatrix};

/// Trace entries at or below this value are excluded from convergence-rate fits.
pub const TRACE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Backtracking {
    pub shrink: f64,
    pub max_halvings: usize,
}

impl Default for Backtracking {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentConfig {
    pub step: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub accept_tol: f64,
    pub backtracking: Option<Backtracking>,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            max_iter: 10_000,
            grad_tol: 1e-10,
            accept_tol: 1e-8,
            backtracking: None,
        }
    }
}

impl DescentConfig {
    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("step", self.step)?;
        positive("grad_tol", self.grad_tol)?;
        positive("accept_tol", self.accept_tol)?;
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        if let Some(bt) = self.backtracking {
            if !(bt.shrink > 0.0 && bt.shrink < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "backtracking shrink must lie in (0,1), got {}",
                    bt.shrink
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// A fixed-step iterate left the generator's domain.
    LeftDomain,
    /// Backtracking exhausted its halvings without decreasing `f`.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentResult {
    pub x_final: Vector,
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub accepted: bool,
    pub final_step_dir: Option<Vector>,
    pub residual: f64,
    pub stop_reason: StopReason,
}

/// Distribution `Q` of initial points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitDistribution {
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    ExplicitPoints(Vec<Vec<f64>>),
}

impl InitDistribution {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            InitDistribution::UniformBox { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: lower.len().max(upper.len()),
                    });
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "uniform box requires finite lower < upper in every coordinate".into(),
                    ));
                }
            }
            InitDistribution::ExplicitPoints(points) => {
                if points.is_empty() {
                    return Err(Error::InvalidConfig("no explicit initial points".into()));
                }
                if let Some(p) = points.iter().find(|p| p.len() != dim) {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: p.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Initial point of chain `index`; explicit points are cycled.
    pub fn draw<R: Rng>(&self, index: usize, rng: &mut R) -> Vector {
        match self {
            InitDistribution::UniformBox { lower, upper } => DVector::from_iterator(
                lower.len(),
                lower.iter().zip(upper).map(|(l, u)| rng.random_range(*l..*u)),
            ),
            InitDistribution::ExplicitPoints(points) => {
                DVector::from_column_slice(&points[index % points.len()])
            }
        }
    }
}

/// Deterministic RNG for chain `index` under `seed`: one ChaCha stream per chain.
pub fn chain_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    pub attempts: usize,
    pub seed: u64,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vector>, residuals: Vec<f64>, attempts: usize, seed: u64) -> Self {
        let iterations = vec![0; points.len()];
        Self {
            points,
            residuals,
            iterations,
            attempts,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(|p| p.len())
    }
}

/// Outcome of one chain inside a Monte Carlo run.
#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub index: usize,
    pub x0: Vector,
    pub result: Result<DescentResult>,
}

impl ChainOutcome {
    pub fn accepted(&self) -> Option<&DescentResult> {
        self.result.as_ref().ok().filter(|r| r.accepted)
    }
}

/// Fixed-step gradient descent of `f` from `x0`.
///
/// Stops when `‖∇f‖₂ ≤ grad_tol` or after `max_iter` steps. A fixed step that
/// leaves the generator's domain ends the chain unaccepted. With backtracking,
/// a step that raises `f` or leaves the domain is retried with a shrunken step.
pub fn descend(
    g: &GeneratorSpec,
    lam: &WeightMatrix,
    x0: &Vector,
    cfg: &DescentConfig,
) -> Result<DescentResult> {
    cfg.validate()?;
    let mut x = x0.clone();
    let (mut f, mut grad) = g.objective_and_gradient(lam, &x)?;
    let mut trace = vec![f];
    let mut final_step_dir = None;
    let mut iterations = 0;
    let mut stop_reason = StopReason::MaxIterations;

    while iterations < cfg.max_iter {
        if grad.norm() <= cfg.grad_tol {
            stop_reason = StopReason::GradientTolerance;
            break;
        }
        let next = match cfg.backtracking {
            None => {
                let proposal = &x - &grad * cfg.step;
                if proposal.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteIterate {
                        iteration: iterations + 1,
                    });
                }
                match g.objective_and_gradient(lam, &proposal) {
                    Ok((f_new, g_new)) => Some((proposal, f_new, g_new)),
                    Err(Error::Domain(_)) => {
                        stop_reason = StopReason::LeftDomain;
                        None
                    }
                    Err(e) => return Err(e),
                }
            }
            Some(bt) => {
                let mut step = cfg.step;
                let mut found = None;
                for _ in 0..=bt.max_halvings {
                    let proposal = &x - &grad * step;
                    if proposal.iter().all(|v| v.is_finite()) {
                        match g.objective_and_gradient(lam, &proposal) {
                            Ok((f_new, g_new)) if f_new <= f => {
                                found = Some((proposal, f_new, g_new));
                                break;
                            }
                            Ok(_) | Err(Error::Domain(_)) | Err(Error::NonFiniteValue) => {}
                            Err(e) => return Err(e),
                        }
                    }
                    step *= bt.shrink;
                }
                if found.is_none() {
                    stop_reason = StopReason::Stalled;
                }
                found
            }
        };
        let Some((proposal, f_new, g_new)) = next else {
            break;
        };
        let delta = &proposal - &x;
        let norm = delta.norm();
        if norm > 0.0 {
            final_step_dir = Some(delta / norm);
        }
        x = proposal;
        f = f_new;
        grad = g_new;
        trace.push(f);
        iterations += 1;
    }
    if iterations == cfg.max_iter && grad.norm() <= cfg.grad_tol {
        stop_reason = StopReason::GradientTolerance;
    }

    let residual = g.residual(&x)?;
    let accepted =
        stop_reason != StopReason::LeftDomain && residual <= cfg.accept_tol && g.extra_acceptance(&x);
    Ok(DescentResult {
        x_final: x,
        iterations,
        trace,
        accepted,
        final_step_dir,
        residual,
        stop_reason,
    })
}

/// Run chains `first_index..first_index + n_chains`, each from its own RNG stream.
///
/// Chains are distributed over the current rayon pool; outcomes come back in
/// chain order, so the result does not depend on the number of workers.
pub fn run_chains(
    g: &GeneratorSpec,
    lam: &WeightMatrix,
    init: &InitDistribution,
    first_index: usize,
    n_chains: usize,
    cfg: &DescentConfig,
    seed: u64,
) -> Vec<ChainOutcome> {
    (first_index..first_index + n_chains)
        .into_par_iter()
        .map(|index| {
            let mut rng = chain_rng(seed, index);
            let x0 = init.draw(index, &mut rng);
            let result = descend(g, lam, &x0, cfg);
            ChainOutcome { index, x0, result }
        })
        .collect()
}

/// Collect accepted limits into a cloud. Errors when nothing was accepted.
pub fn cloud_from_outcomes(outcomes: &[ChainOutcome], seed: u64) -> Result<PointCloud> {
    let mut cloud = PointCloud {
        points: Vec::new(),
        residuals: Vec::new(),
        iterations: Vec::new(),
        attempts: outcomes.len(),
        seed,
    };
    for r in outcomes.iter().filter_map(ChainOutcome::accepted) {
        cloud.points.push(r.x_final.clone());
        cloud.residuals.push(r.residual);
        cloud.iterations.push(r.iterations);
    }
    if cloud.points.is_empty() {
        let residuals: Vec<f64> = outcomes
            .iter()
            .map(|o| o.result.as_ref().map_or(f64::INFINITY, |r| r.residual))
            .collect();
        let best_residual = residuals.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::NoAcceptedPoints {
            attempts: outcomes.len(),
            best_residual,
            residuals,
        });
    }
    Ok(cloud)
}

/// Rejection sampler: `n_chains` independent descents from draws of `init`,
/// keeping only accepted limits.
pub fn sample_manifold(
    g: &GeneratorSpec,
    lam: &WeightMatrix,
    init: &InitDistribution,
    n_chains: usize,
    cfg: &DescentConfig,
    seed: u64,
) -> Result<PointCloud> {
    if n_chains == 0 {
        return Err(Error::InvalidConfig("n_chains must be at least 1".into()));
    }
    cfg.validate()?;
    init.validate(g.dim())?;
    let outcomes = run_chains(g, lam, init, 0, n_chains, cfg, seed);
    cloud_from_outcomes(&outcomes, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceFit {
    pub rate: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `log f_t` against `t` over entries above [`TRACE_FLOOR`].
pub fn fit_convergence_rate(trace: &[f64]) -> Result<ConvergenceFit> {
    const REQUIRED: usize = 5;
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > TRACE_FLOOR && f.is_finite())
        .map(|(t, f)| (t as f64, f.ln()))
        .collect();
    if pts.len() < REQUIRED {
        return Err(Error::InsufficientTrace {
            usable: pts.len(),
            required: REQUIRED,
        });
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in &pts {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sty / stt;
    let ss_res: f64 = pts
        .iter()
        .map(|(t, y)| {
            let e = y - (mean_y + slope * (t - mean_t));
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(ConvergenceFit {
        rate: slope.exp(),
        r_squared,
    })
}

/// Empirical acceptance probability of the rejection step.
pub fn acceptance_rate(cloud: &PointCloud) -> f64 {
    if cloud.attempts == 0 {
        return 0.0;
    }
    cloud.points.len() as f64 / cloud.attempts as f64
}
