//! Identified sets `{θ : n⁻¹ Σ_i g_ℓ(Y_i; θ) = 0, ℓ = 1..s}` from moment conditions.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use super::ModelInstance;
use crate::error::{Error, Result};
use crate::generator::{GeneratorSpec, Matrix, Vector};

pub type MomentValueFn = dyn Fn(&[f64], &Vector) -> f64 + Send + Sync;
pub type MomentGradientFn = dyn Fn(&[f64], &Vector) -> Vector + Send + Sync;

/// One moment function `g(y; θ)`, optionally with its `θ`-gradient.
#[derive(Clone)]
pub struct MomentFn {
    value: Arc<MomentValueFn>,
    gradient: Option<Arc<MomentGradientFn>>,
}

impl fmt::Debug for MomentFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MomentFn")
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl MomentFn {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(&[f64], &Vector) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(&[f64], &Vector) -> Vector + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    /// `g(y; θ) = y − θ_coord` for scalar observations.
    pub fn mean(dim: usize, coord: usize) -> Self {
        Self::new(move |y, theta| y[0] - theta[coord]).with_gradient(move |_, _| {
            let mut g = Vector::zeros(dim);
            g[coord] = -1.0;
            g
        })
    }

    /// `g(y; μ, σ) = y² − μ² − σ²`: the Gaussian second moment.
    pub fn gaussian_second_moment() -> Self {
        Self::new(|y, theta| y[0] * y[0] - theta[0] * theta[0] - theta[1] * theta[1])
            .with_gradient(|_, theta| DVector::from_vec(vec![-2.0 * theta[0], -2.0 * theta[1]]))
    }
}

#[derive(Debug, Clone)]
pub struct MomentModel {
    dim: usize,
    moment_fns: Vec<MomentFn>,
    data: Arc<Vec<Vec<f64>>>,
}

impl MomentModel {
    pub fn new(dim: usize, moment_fns: Vec<MomentFn>, data: Vec<Vec<f64>>) -> Result<Self> {
        if moment_fns.is_empty() {
            return Err(Error::InvalidSpec("need at least one moment function".into()));
        }
        if moment_fns.len() >= dim {
            return Err(Error::InvalidSpec(format!(
                "{} moment conditions in dimension {dim}: need fewer conditions than parameters",
                moment_fns.len()
            )));
        }
        if data.is_empty() {
            return Err(Error::InvalidSpec("no observations".into()));
        }
        Ok(Self {
            dim,
            moment_fns,
            data: Arc::new(data),
        })
    }

    pub fn codim(&self) -> usize {
        self.moment_fns.len()
    }

    pub fn generator(&self) -> GeneratorSpec {
        let fns = self.moment_fns.clone();
        let data = self.data.clone();
        let n = data.len() as f64;
        let s = fns.len();
        let psi = move |theta: &Vector| {
            Ok(DVector::from_iterator(
                s,
                fns.iter()
                    .map(|g| data.iter().map(|y| (g.value)(y, theta)).sum::<f64>() / n),
            ))
        };
        let g = GeneratorSpec::new(self.dim, s, psi).expect("s < d checked at construction");
        if self.moment_fns.iter().all(|m| m.gradient.is_some()) {
            let fns = self.moment_fns.clone();
            let data = self.data.clone();
            let dim = self.dim;
            g.with_analytic_jacobian(move |theta| {
                let mut j = Matrix::zeros(s, dim);
                for (row, m) in fns.iter().enumerate() {
                    let grad = m.gradient.as_ref().expect("checked above");
                    let mut acc = Vector::zeros(dim);
                    for y in data.iter() {
                        acc += grad(y, theta);
                    }
                    j.set_row(row, &(acc / n).transpose());
                }
                Ok(j)
            })
        } else {
            g
        }
    }

    pub fn instance(&self) -> ModelInstance {
        ModelInstance::new("moment", self.generator())
    }
}
