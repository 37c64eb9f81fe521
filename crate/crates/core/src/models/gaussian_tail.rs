//! Gaussian `N(μ, σ²)` constrained by a fixed interval probability
//! `P(r0 < Y < r1) = s0`.

use std::sync::Arc;

use nalgebra::DVector;

use super::{normal, ModelInstance};
use crate::error::{Error, Result};
use crate::generator::{GeneratorSpec, Matrix, Vector};
use crate::mle::ObjectiveSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTail {
    pub r0: f64,
    pub r1: f64,
    pub s0: f64,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("sigma must be positive, got {sigma}")))
    }
}

impl GaussianTail {
    pub fn new(r0: f64, r1: f64, s0: f64) -> Result<Self> {
        if !(r0 < r1) || !r0.is_finite() || !r1.is_finite() {
            return Err(Error::InvalidParameters(format!("need r0 < r1, got {r0}, {r1}")));
        }
        if !(s0 > 0.0 && s0 < 1.0) {
            return Err(Error::InvalidParameters(format!("need 0 < s0 < 1, got {s0}")));
        }
        Ok(Self { r0, r1, s0 })
    }

    /// `Φ((r1−μ)/σ) − Φ((r0−μ)/σ) − s0`
    pub fn psi(&self, mu: f64, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        Ok(normal::cdf((self.r1 - mu) / sigma) - normal::cdf((self.r0 - mu) / sigma) - self.s0)
    }

    /// `(∂Ψ/∂μ, ∂Ψ/∂σ)`
    pub fn gradient(&self, mu: f64, sigma: f64) -> Result<[f64; 2]> {
        check_sigma(sigma)?;
        let z1 = (self.r1 - mu) / sigma;
        let z0 = (self.r0 - mu) / sigma;
        let (p1, p0) = (normal::pdf(z1), normal::pdf(z0));
        Ok([
            (-p1 + p0) / sigma,
            (-(self.r1 - mu) * p1 + (self.r0 - mu) * p0) / (sigma * sigma),
        ])
    }

    pub fn generator(&self) -> GeneratorSpec {
        let (m1, m2) = (*self, *self);
        GeneratorSpec::new(2, 1, move |x| Ok(DVector::from_element(1, m1.psi(x[0], x[1])?)))
            .expect("d=2, s=1 is valid")
            .with_analytic_jacobian(move |x| {
                Ok(Matrix::from_row_slice(1, 2, &m2.gradient(x[0], x[1])?))
            })
    }

    /// The `σ > 0` with `Ψ(μ, σ) = 0`, found by bisection; `None` when `μ` lies
    /// outside `(r0, r1)`, where `Ψ(μ, ·)` is not monotone.
    pub fn sigma_on_manifold(&self, mu: f64) -> Option<f64> {
        if !(mu > self.r0 && mu < self.r1) {
            return None;
        }
        // Ψ decreases from 1 − s0 (σ → 0) to −s0 (σ → ∞).
        let f = |s: f64| self.psi(mu, s).unwrap_or(f64::NAN);
        let mut lo = 1e-12;
        let mut hi = 1.0;
        while f(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }

    pub fn instance(&self, sample: Option<GaussianSample>) -> ModelInstance {
        let mut instance = ModelInstance::new("gaussian_tail", self.generator());
        if let Some(sample) = sample {
            instance.objective = Some(sample.mean_log_likelihood());
            let s = Arc::new(sample);
            instance.log_likelihood = Some(Arc::new(move |x: &Vector| s.log_likelihood_sum(x[0], x[1])));
        }
        instance
    }
}

/// Univariate observations modelled as IID `N(μ, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSample {
    n: usize,
    mean: f64,
    /// Biased (1/n) sample variance.
    variance: f64,
}

impl GaussianSample {
    pub fn new(data: &[f64]) -> Result<Self> {
        if data.is_empty() || data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("need a non-empty finite sample".into()));
        }
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let variance = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Self {
            n: data.len(),
            mean,
            variance,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `n⁻¹ Σ log φ((X_i − μ)/σ)/σ`
    pub fn mean_log_likelihood_at(&self, mu: f64, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        let dm = self.mean - mu;
        Ok(-sigma.ln()
            - 0.5 * (2.0 * std::f64::consts::PI).ln()
            - (dm * dm + self.variance) / (2.0 * sigma * sigma))
    }

    pub fn mean_log_likelihood_gradient(&self, mu: f64, sigma: f64) -> Result<[f64; 2]> {
        check_sigma(sigma)?;
        let dm = self.mean - mu;
        let s2 = sigma * sigma;
        Ok([dm / s2, -1.0 / sigma + (dm * dm + self.variance) / (s2 * sigma)])
    }

    pub fn log_likelihood_sum(&self, mu: f64, sigma: f64) -> Result<f64> {
        Ok(self.n as f64 * self.mean_log_likelihood_at(mu, sigma)?)
    }

    pub fn mean_log_likelihood(&self) -> ObjectiveSpec {
        let (a, b) = (self.clone(), self.clone());
        ObjectiveSpec::new(
            move |x| a.mean_log_likelihood_at(x[0], x[1]),
            move |x| Ok(DVector::from_row_slice(&b.mean_log_likelihood_gradient(x[0], x[1])?)),
        )
    }
}
