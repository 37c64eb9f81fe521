//! Maximization of a smooth objective over a solution manifold by alternating
//! one ascent step with a full descent back onto the manifold.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descent::{chain_rng, descend, DescentConfig, InitDistribution};
use crate::error::{Error, Result};
use crate::generator::{GeneratorSpec, Vector, WeightMatrix};
use crate::linalg::{orthogonal_remainder, row_space_basis, smallest_singular_value, RANK_TOL};

pub type ScalarFn = dyn Fn(&Vector) -> Result<f64> + Send + Sync;
pub type GradientFn = dyn Fn(&Vector) -> Result<Vector> + Send + Sync;

/// An objective to maximize together with its gradient.
#[derive(Clone)]
pub struct ObjectiveSpec {
    value: Arc<ScalarFn>,
    gradient: Arc<GradientFn>,
}

impl fmt::Debug for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ObjectiveSpec")
    }
}

impl ObjectiveSpec {
    pub fn new<V, G>(value: V, gradient: G) -> Self
    where
        V: Fn(&Vector) -> Result<f64> + Send + Sync + 'static,
        G: Fn(&Vector) -> Result<Vector> + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    /// Like [`ObjectiveSpec::new`], but first checks the gradient against central
    /// differences of the value at each probe point (relative tolerance `1e-4`).
    pub fn validated<V, G>(value: V, gradient: G, probes: &[Vector]) -> Result<Self>
    where
        V: Fn(&Vector) -> Result<f64> + Send + Sync + 'static,
        G: Fn(&Vector) -> Result<Vector> + Send + Sync + 'static,
    {
        let spec = Self::new(value, gradient);
        for (index, p) in probes.iter().enumerate() {
            let rel_error = spec.gradient_check(p)?;
            if rel_error > 1e-4 {
                return Err(Error::GradientMismatch { index, rel_error });
            }
        }
        Ok(spec)
    }

    /// Relative error between the gradient and a central-difference estimate.
    pub fn gradient_check(&self, x: &Vector) -> Result<f64> {
        let grad = self.gradient(x)?;
        let mut fd = Vector::zeros(x.len());
        let mut probe = x.clone();
        for j in 0..x.len() {
            let h = 1e-6 * x[j].abs().max(1.0);
            probe[j] = x[j] + h;
            let plus = self.value(&probe)?;
            probe[j] = x[j] - h;
            let minus = self.value(&probe)?;
            probe[j] = x[j];
            fd[j] = (plus - minus) / (2.0 * h);
        }
        Ok((&grad - &fd).norm() / grad.norm().max(fd.norm()).max(1e-8))
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        (self.gradient)(x)
    }

    pub fn negated(&self) -> Self {
        let value = self.value.clone();
        let gradient = self.gradient.clone();
        Self::new(move |x| Ok(-value(x)?), move |x| Ok(-gradient(x)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleConfig {
    pub ascent_step: f64,
    pub descent: DescentConfig,
    pub tangent_tol: f64,
    pub max_outer: usize,
    /// Halve the ascent step when the tangential norm is extrapolated to level
    /// off above `tangent_tol`.
    #[serde(default = "yes")]
    pub bias_control: bool,
}

fn yes() -> bool {
    true
}

/// Halvings allowed by the bias control.
pub const MAX_BIAS_HALVINGS: usize = 30;

/// Step-size halvings allowed when the inner descent is rejected.
pub const MAX_ASCENT_HALVINGS: usize = 20;

impl MleConfig {
    pub fn new(ascent_step: f64, descent: DescentConfig) -> Self {
        Self {
            ascent_step,
            descent,
            tangent_tol: 1e-6,
            max_outer: 500,
            bias_control: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ascent_step > 0.0) || !self.ascent_step.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ascent_step must be positive, got {}",
                self.ascent_step
            )));
        }
        if !(self.tangent_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tangent_tol must be positive, got {}",
                self.tangent_tol
            )));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidConfig("max_outer must be positive".into()));
        }
        self.descent.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub theta: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub theta: Vector,
    pub value: f64,
    pub outer_iters: usize,
    pub tangential_grad_norm: f64,
    pub converged: bool,
    /// Whether any outer step needed its ascent step halved.
    pub halved: bool,
    /// Base ascent step in force at the end, after any bias-control halvings.
    pub final_ascent_step: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Norm of the part of `grad` orthogonal to the row space of `∇Ψ(θ)`; zero
/// exactly when `grad` is normal to the manifold.
pub fn tangential_gradient_norm(g: &GeneratorSpec, theta: &Vector, grad: &Vector) -> Result<f64> {
    if grad.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: grad.len(),
        });
    }
    let jac = g.eval_jacobian(theta)?;
    let sigma = smallest_singular_value(&jac);
    if sigma < RANK_TOL {
        return Err(Error::RankDeficient(sigma));
    }
    Ok(orthogonal_remainder(&row_space_basis(&jac), grad).norm())
}

fn trajectory_point(theta: &Vector, value: f64) -> TrajectoryPoint {
    TrajectoryPoint {
        theta: theta.as_slice().to_vec(),
        value,
    }
}

/// Runs the alternating scheme and reports the final state even when the
/// stopping rule was never met.
pub fn run_constrained_mle(
    g: &GeneratorSpec,
    lam: &WeightMatrix,
    obj: &ObjectiveSpec,
    theta0: &Vector,
    cfg: &MleConfig,
) -> Result<MleResult> {
    cfg.validate()?;
    let start = descend(g, lam, theta0, &cfg.descent)?;
    if !start.accepted {
        return Err(Error::NotConverged {
            outer_iters: 0,
            reason: format!(
                "initial descent was rejected (residual {:e})",
                start.residual
            ),
        });
    }
    let mut theta = start.x_final;
    let mut value = obj.value(&theta)?;
    let mut trajectory = vec![trajectory_point(&theta, value)];
    let mut halved = false;
    let mut outer_iters = 0;
    let mut base_alpha = cfg.ascent_step;
    let mut bias_halvings = 0;
    let mut history: Vec<f64> = Vec::new();

    loop {
        let grad = obj.gradient(&theta)?;
        let tangential = tangential_gradient_norm(g, &theta, &grad)?;
        if tangential <= cfg.tangent_tol || outer_iters == cfg.max_outer {
            return Ok(MleResult {
                converged: tangential <= cfg.tangent_tol,
                theta,
                value,
                outer_iters,
                tangential_grad_norm: tangential,
                halved,
                final_ascent_step: base_alpha,
                trajectory,
            });
        }
        history.push(tangential);
        if cfg.bias_control && bias_halvings < MAX_BIAS_HALVINGS {
            if let Some(limit) = extrapolated_limit(&history) {
                if limit > 0.5 * cfg.tangent_tol {
                    base_alpha *= 0.5;
                    bias_halvings += 1;
                    history.clear();
                }
            }
        }

        let mut alpha = base_alpha;
        let mut halvings = 0;
        let next = loop {
            let proposal = &theta + &grad * alpha;
            match descend(g, lam, &proposal, &cfg.descent) {
                Ok(r) if r.accepted => break r.x_final,
                Ok(_) | Err(Error::Domain(_)) | Err(Error::NonFiniteIterate { .. }) => {}
                Err(e) => return Err(e),
            }
            halvings += 1;
            halved = true;
            if halvings > MAX_ASCENT_HALVINGS {
                return Err(Error::NotConverged {
                    outer_iters,
                    reason: "inner descent rejected after repeated step halving".into(),
                });
            }
            alpha *= 0.5;
        };
        theta = next;
        value = obj.value(&theta)?;
        trajectory.push(trajectory_point(&theta, value));
        outer_iters += 1;
    }
}

/// With a fixed ascent step the iteration settles where the ascent and the
/// curved return path balance, at a tangential norm proportional to the step.
/// A norm that stopped moving is its own floor. Once the last four norms contract with a steady ratio, Aitken's Δ² gives
/// that floor; it is reported only when the sequence is visibly levelling off.
fn extrapolated_limit(history: &[f64]) -> Option<f64> {
    let &[t0, t1, t2, t3] = history.get(history.len().checked_sub(4)?..)? else {
        return None;
    };
    let (d1, d2, d3) = (t0 - t1, t1 - t2, t2 - t3);
    if d2.abs() <= 1e-9 * t3 && d3.abs() <= 1e-9 * t3 {
        return Some(t3);
    }
    if !(d1 > 0.0 && d2 > 0.0 && d3 > 0.0) {
        return None;
    }
    let (q1, q2) = (d2 / d1, d3 / d2);
    if !(q2 > 0.0 && q2 < 1.0) || (q1 - q2).abs() > 0.05 * (1.0 - q2) {
        return None;
    }
    let limit = t3 - d3 * q2 / (1.0 - q2);
    (limit > 0.5 * t3).then_some(limit)
}

/// Maximize `obj` over `{Ψ = 0}` starting from `theta0`.
pub fn constrained_mle(
    g: &GeneratorSpec,
    lam: &WeightMatrix,
    obj: &ObjectiveSpec,
    theta0: &Vector,
    cfg: &MleConfig,
) -> Result<MleResult> {
    let result = run_constrained_mle(g, lam, obj, theta0, cfg)?;
    if !result.converged {
        return Err(Error::NotConverged {
            outer_iters: result.outer_iters,
            reason: format!(
                "tangential gradient norm {:e} above tolerance {:e}",
                result.tangential_grad_norm, cfg.tangent_tol
            ),
        });
    }
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct MultiStartResult {
    pub best: MleResult,
    /// One entry per start; failed starts carry their error.
    pub all: Vec<Result<MleResult>>,
    pub starts: Vec<Vector>,
}

/// Runs [`run_constrained_mle`] from `n_starts` draws of `init` and keeps the
/// highest-valued converged result.
pub fn multi_start_mle(
    g: &GeneratorSpec,
    lam: &WeightMatrix,
    obj: &ObjectiveSpec,
    init: &InitDistribution,
    n_starts: usize,
    cfg: &MleConfig,
    seed: u64,
) -> Result<MultiStartResult> {
    if n_starts == 0 {
        return Err(Error::InvalidConfig("n_starts must be at least 1".into()));
    }
    init.validate(g.dim())?;
    cfg.validate()?;
    let starts: Vec<Vector> = (0..n_starts)
        .map(|i| init.draw(i, &mut chain_rng(seed, i)))
        .collect();
    let all: Vec<Result<MleResult>> = starts
        .par_iter()
        .map(|s| run_constrained_mle(g, lam, obj, s, cfg))
        .collect();
    let best = all
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .filter(|r| r.converged)
        .fold(None::<&MleResult>, |best, r| match best {
            Some(b) if b.value >= r.value => Some(b),
            _ => Some(r),
        })
        .cloned()
        .ok_or(Error::NoConvergedRuns(n_starts))?;
    Ok(MultiStartResult { best, all, starts })
}
