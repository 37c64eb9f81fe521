//! Constraint systems `Ψ: R^d → R^s`, their Jacobians, and the squared-residual
//! objective `f(x) = Ψ(x)ᵀ Λ Ψ(x)` whose minimizers are exactly the solution set.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub type PsiFn = dyn Fn(&Vector) -> Result<Vector> + Send + Sync;
pub type JacobianFn = dyn Fn(&Vector) -> Result<Matrix> + Send + Sync;
pub type AcceptFn = dyn Fn(&Vector) -> bool + Send + Sync;

/// Relative central-difference step used when no analytic Jacobian is supplied.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Clone)]
pub enum JacobianMode {
    Analytic(Arc<JacobianFn>),
    /// Central differences with per-coordinate step `step * max(1, |x_j|)`.
    FiniteDifference { step: f64 },
}

impl fmt::Debug for JacobianMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JacobianMode::Analytic(_) => write!(f, "Analytic"),
            JacobianMode::FiniteDifference { step } => write!(f, "FiniteDifference({step:e})"),
        }
    }
}

/// A constraint map `Ψ` with `codim` outputs on `R^dim`.
///
/// Evaluators must be pure; the spec is shared freely between worker threads.
/// An optional extra acceptance predicate lets a model add conditions beyond
/// `Ψ(x) = 0` (density ridges require negative normal curvature).
#[derive(Clone)]
pub struct GeneratorSpec {
    dim: usize,
    codim: usize,
    psi: Arc<PsiFn>,
    jacobian: JacobianMode,
    acceptance: Option<Arc<AcceptFn>>,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("dim", &self.dim)
            .field("codim", &self.codim)
            .field("jacobian", &self.jacobian)
            .field("extra_acceptance", &self.acceptance.is_some())
            .finish()
    }
}

impl GeneratorSpec {
    pub fn new<F>(dim: usize, codim: usize, psi: F) -> Result<Self>
    where
        F: Fn(&Vector) -> Result<Vector> + Send + Sync + 'static,
    {
        if dim == 0 || codim == 0 {
            return Err(Error::InvalidGenerator(
                "dimension and codimension must be positive".into(),
            ));
        }
        if codim > dim {
            return Err(Error::InvalidGenerator(format!(
                "codimension {codim} exceeds dimension {dim}"
            )));
        }
        Ok(Self {
            dim,
            codim,
            psi: Arc::new(psi),
            jacobian: JacobianMode::FiniteDifference {
                step: DEFAULT_FD_STEP,
            },
            acceptance: None,
        })
    }

    pub fn with_analytic_jacobian<F>(mut self, jacobian: F) -> Self
    where
        F: Fn(&Vector) -> Result<Matrix> + Send + Sync + 'static,
    {
        self.jacobian = JacobianMode::Analytic(Arc::new(jacobian));
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::StepUnderflow(step));
        }
        self.jacobian = JacobianMode::FiniteDifference { step };
        Ok(self)
    }

    pub fn with_acceptance<F>(mut self, accept: F) -> Self
    where
        F: Fn(&Vector) -> bool + Send + Sync + 'static,
    {
        self.acceptance = Some(Arc::new(accept));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    pub fn jacobian_mode(&self) -> &JacobianMode {
        &self.jacobian
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        matches!(self.jacobian, JacobianMode::Analytic(_))
    }

    fn check_input(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    pub fn eval_psi(&self, x: &Vector) -> Result<Vector> {
        self.check_input(x)?;
        let value = (self.psi)(x)?;
        if value.len() != self.codim {
            return Err(Error::DimensionMismatch {
                expected: self.codim,
                got: value.len(),
            });
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue);
        }
        Ok(value)
    }

    /// Largest absolute constraint violation `max_i |Ψ_i(x)|`.
    pub fn residual(&self, x: &Vector) -> Result<f64> {
        Ok(self.eval_psi(x)?.amax())
    }

    pub fn eval_jacobian(&self, x: &Vector) -> Result<Matrix> {
        self.check_input(x)?;
        match &self.jacobian {
            JacobianMode::Analytic(jac) => {
                let j = jac(x)?;
                if j.nrows() != self.codim || j.ncols() != self.dim {
                    return Err(Error::JacobianShape {
                        rows: j.nrows(),
                        cols: j.ncols(),
                        expected_rows: self.codim,
                        expected_cols: self.dim,
                    });
                }
                if j.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteValue);
                }
                Ok(j)
            }
            JacobianMode::FiniteDifference { step } => self.fd_jacobian(x, *step),
        }
    }

    /// Central-difference Jacobian, regardless of the configured mode.
    pub fn fd_jacobian(&self, x: &Vector, step: f64) -> Result<Matrix> {
        if !(step > 0.0) {
            return Err(Error::StepUnderflow(step));
        }
        self.check_input(x)?;
        let mut jac = Matrix::zeros(self.codim, self.dim);
        let mut probe = x.clone();
        for j in 0..self.dim {
            let h = step * x[j].abs().max(1.0);
            probe[j] = x[j] + h;
            let plus = self.eval_psi(&probe)?;
            probe[j] = x[j] - h;
            let minus = self.eval_psi(&probe)?;
            probe[j] = x[j];
            jac.set_column(j, &((plus - minus) / (2.0 * h)));
        }
        Ok(jac)
    }

    /// Extra model-specific acceptance condition; `true` when none is set.
    pub fn extra_acceptance(&self, x: &Vector) -> bool {
        self.acceptance.as_ref().is_none_or(|accept| accept(x))
    }

    pub fn objective(&self, lam: &WeightMatrix, x: &Vector) -> Result<f64> {
        lam.check_codim(self.codim)?;
        let psi = self.eval_psi(x)?;
        Ok(lam.quadratic_form(&psi))
    }

    /// `∇f(x) = 2 [∇Ψ(x)]ᵀ Λ Ψ(x)`.
    pub fn grad_objective(&self, lam: &WeightMatrix, x: &Vector) -> Result<Vector> {
        Ok(self.objective_and_gradient(lam, x)?.1)
    }

    pub fn objective_and_gradient(&self, lam: &WeightMatrix, x: &Vector) -> Result<(f64, Vector)> {
        lam.check_codim(self.codim)?;
        let psi = self.eval_psi(x)?;
        let jac = self.eval_jacobian(x)?;
        let weighted = lam.apply(&psi);
        let value = psi.dot(&weighted).max(0.0);
        let grad = jac.tr_mul(&weighted) * 2.0;
        Ok((value, grad))
    }
}

/// Symmetric positive-definite weighting `Λ` of the squared residual.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightMatrix {
    Identity(usize),
    Dense(Matrix),
}

impl WeightMatrix {
    pub fn identity(codim: usize) -> Self {
        WeightMatrix::Identity(codim)
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&Vector::from_column_slice(entries)))
    }

    pub fn new(entries: Matrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::InvalidWeightMatrix(format!(
                "expected a non-empty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWeightMatrix("non-finite entries".into()));
        }
        let asym = (&entries - entries.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::InvalidWeightMatrix(format!(
                "asymmetry {asym:e} exceeds 1e-12"
            )));
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        let min_eig = SymmetricEigen::new(sym.clone()).eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(Error::InvalidWeightMatrix(format!(
                "smallest eigenvalue {min_eig:e} is not positive"
            )));
        }
        Ok(WeightMatrix::Dense(sym))
    }

    pub fn codim(&self) -> usize {
        match self {
            WeightMatrix::Identity(s) => *s,
            WeightMatrix::Dense(m) => m.nrows(),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        match self {
            WeightMatrix::Identity(s) => Matrix::identity(*s, *s),
            WeightMatrix::Dense(m) => m.clone(),
        }
    }

    fn check_codim(&self, codim: usize) -> Result<()> {
        if self.codim() != codim {
            return Err(Error::DimensionMismatch {
                expected: codim,
                got: self.codim(),
            });
        }
        Ok(())
    }

    fn apply(&self, v: &Vector) -> Vector {
        match self {
            WeightMatrix::Identity(_) => v.clone(),
            WeightMatrix::Dense(m) => m * v,
        }
    }

    fn quadratic_form(&self, v: &Vector) -> f64 {
        v.dot(&self.apply(v)).max(0.0)
    }
}
