//! Python bindings for `solman`.
//!
//! Vectors cross the boundary as lists of floats and point clouds as lists of
//! lists; results come back as dicts.

use std::sync::Arc;

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use solman::descent::{fit_convergence_rate, sample_manifold, DescentConfig, InitDistribution};
use solman::generator::{Vector, WeightMatrix};
use solman::mle::{constrained_mle, MleConfig};
use solman::models::fairness::{Fairness, FairnessTable};
use solman::models::gaussian_tail::{GaussianSample, GaussianTail};
use solman::models::kde::{self, Density, GaussianKde, StandardNormalDensity};
use solman::models::missing_data::{Cells, MissingData};
use solman::models::ModelInstance;
use solman::posterior::{credible_region, frechet_mean, map_estimate, posterior_mean, posterior_weights, PriorSpec};
use solman::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NoAcceptedPoints { .. } | Error::NotConverged { .. } | Error::NoConvergedRuns(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vector(xs: Vec<f64>) -> Vector {
    DVector::from_vec(xs)
}

fn cloud(points: Vec<Vec<f64>>) -> Vec<Vector> {
    points.into_iter().map(vector).collect()
}

fn rows(points: &[Vector]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.as_slice().to_vec()).collect()
}

fn descent_config(step: f64, max_iter: usize, grad_tol: f64, accept_tol: f64) -> DescentConfig {
    DescentConfig {
        step,
        max_iter,
        grad_tol,
        accept_tol,
        backtracking: None,
    }
}

/// A built-in model: its constraint map `Ψ` plus optional objective and likelihood.
#[pyclass(frozen, name = "Model", module = "solman_py")]
struct PyModel {
    inner: ModelInstance,
}

#[pymethods]
impl PyModel {
    /// Gaussian `N(μ, σ²)` with `P(r0 < Y < r1) = s0`; `data` adds the likelihood.
    #[staticmethod]
    #[pyo3(signature = (r0, r1, s0, data=None))]
    fn gaussian_tail(r0: f64, r1: f64, s0: f64, data: Option<Vec<f64>>) -> PyResult<Self> {
        let model = GaussianTail::new(r0, r1, s0).map_err(to_py)?;
        let sample = data.map(|d| GaussianSample::new(&d)).transpose().map_err(to_py)?;
        Ok(Self {
            inner: model.instance(sample),
        })
    }

    /// Missing-data model. Pass exactly one of `theta` (7 parameters), `targets` or `counts`
    /// (six cells in the order x1_y1_r1, x1_y0_r1, x0_y1_r1, x0_y0_r1, x0_r0, x1_r0).
    #[staticmethod]
    #[pyo3(signature = (theta=None, targets=None, counts=None))]
    fn missing_data(theta: Option<Vec<f64>>, targets: Option<[f64; 6]>, counts: Option<[f64; 6]>) -> PyResult<Self> {
        let model = match (theta, targets, counts) {
            (Some(t), None, None) => MissingData::from_parameters(&t),
            (None, Some(t), None) => MissingData::new(Cells::from_array(t)),
            (None, None, Some(c)) => MissingData::from_counts(Cells::from_array(c)),
            _ => return Err(PyValueError::new_err("pass exactly one of theta, targets, counts")),
        }
        .map_err(to_py)?;
        Ok(Self { inner: model.instance() })
    }

    /// Test-fair randomized classifier; `joint[a][w][y] = P(W=w, Y=y | A=a)`.
    #[staticmethod]
    #[pyo3(signature = (joint, p_a1=0.5))]
    fn fairness(joint: [[[f64; 2]; 2]; 2], p_a1: f64) -> PyResult<Self> {
        let model = Fairness::new(FairnessTable { joint, p_a1 }).map_err(to_py)?;
        Ok(Self { inner: model.instance() })
    }

    /// Level set `{p̂ = level}` of a Gaussian KDE. `bandwidth=None` uses Silverman's rule.
    #[staticmethod]
    #[pyo3(signature = (data, level, bandwidth=None))]
    fn kde_level_set(data: Vec<Vec<f64>>, level: f64, bandwidth: Option<f64>) -> PyResult<Self> {
        let kde = build_kde(data, bandwidth)?;
        Ok(Self {
            inner: ModelInstance::new("kde_level_set", kde::level_set_generator(Arc::new(kde), level)),
        })
    }

    /// `k`-dimensional density ridge of a Gaussian KDE.
    #[staticmethod]
    #[pyo3(signature = (data, k, bandwidth=None))]
    fn kde_ridge(data: Vec<Vec<f64>>, k: usize, bandwidth: Option<f64>) -> PyResult<Self> {
        let kde = build_kde(data, bandwidth)?;
        let g = kde::ridge_generator(Arc::new(kde), k).map_err(to_py)?;
        Ok(Self {
            inner: ModelInstance::new("kde_ridge", g),
        })
    }

    #[staticmethod]
    fn standard_normal_level_set(dim: usize, level: f64) -> PyResult<Self> {
        if dim == 0 {
            return Err(PyValueError::new_err("dim must be positive"));
        }
        let density: Arc<dyn Density> = Arc::new(StandardNormalDensity { dim });
        Ok(Self {
            inner: ModelInstance::new("standard_normal_level_set", kde::level_set_generator(density, level)),
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.generator.dim()
    }

    #[getter]
    fn codim(&self) -> usize {
        self.inner.generator.codim()
    }

    fn psi(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.generator.eval_psi(&vector(x)).map_err(to_py)?.as_slice().to_vec())
    }

    /// Jacobian as a list of rows.
    fn jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let j = self.inner.generator.eval_jacobian(&vector(x)).map_err(to_py)?;
        Ok(j.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// `max_k |Ψ_k(x)|`
    fn residual(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.generator.residual(&vector(x)).map_err(to_py)
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        let obj = self
            .inner
            .objective
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("model has no objective"))?;
        obj.value(&vector(x)).map_err(to_py)
    }

    fn log_likelihood(&self, x: Vec<f64>) -> PyResult<f64> {
        let ll = self
            .inner
            .log_likelihood
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("model has no likelihood"))?;
        ll(&vector(x)).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(name={:?}, dim={}, codim={})",
            self.inner.name,
            self.inner.generator.dim(),
            self.inner.generator.codim()
        )
    }
}

fn build_kde(data: Vec<Vec<f64>>, bandwidth: Option<f64>) -> PyResult<GaussianKde> {
    let points = cloud(data);
    let h = match bandwidth {
        Some(h) => h,
        None => solman::posterior::silverman_bandwidth(&points).map_err(to_py)?,
    };
    GaussianKde::new(points, h).map_err(to_py)
}

/// Gradient-descent sampler from a uniform box. Returns accepted points,
/// their residuals and iteration counts, and the number of chains run.
#[pyfunction]
#[pyo3(signature = (model, lower, upper, n_chains, step=0.5, seed=0, max_iter=10_000, grad_tol=1e-10, accept_tol=1e-8))]
#[allow(clippy::too_many_arguments)]
fn sample<'py>(
    py: Python<'py>,
    model: &PyModel,
    lower: Vec<f64>,
    upper: Vec<f64>,
    n_chains: usize,
    step: f64,
    seed: u64,
    max_iter: usize,
    grad_tol: f64,
    accept_tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let g = &model.inner.generator;
    let init = InitDistribution::UniformBox { lower, upper };
    let cfg = descent_config(step, max_iter, grad_tol, accept_tol);
    let lam = WeightMatrix::identity(g.codim());
    let cloud = py
        .detach(|| sample_manifold(g, &lam, &init, n_chains, &cfg, seed))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("points", rows(&cloud.points))?;
    out.set_item("residuals", cloud.residuals)?;
    out.set_item("iterations", cloud.iterations)?;
    out.set_item("attempts", cloud.attempts)?;
    Ok(out)
}

/// Maximizes the model's objective on the manifold from `start`.
#[pyfunction]
#[pyo3(signature = (model, start, ascent_step, step=0.5, tangent_tol=1e-6, max_outer=500, max_iter=10_000))]
#[allow(clippy::too_many_arguments)]
fn maximize<'py>(
    py: Python<'py>,
    model: &PyModel,
    start: Vec<f64>,
    ascent_step: f64,
    step: f64,
    tangent_tol: f64,
    max_outer: usize,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let obj = model
        .inner
        .objective
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("model has no objective"))?;
    let g = &model.inner.generator;
    let mut cfg = MleConfig::new(ascent_step, descent_config(step, max_iter, 1e-10, 1e-8));
    cfg.tangent_tol = tangent_tol;
    cfg.max_outer = max_outer;
    let lam = WeightMatrix::identity(g.codim());
    let theta0 = vector(start);
    let r = py
        .detach(|| constrained_mle(g, &lam, obj, &theta0, &cfg))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("theta", r.theta.as_slice().to_vec())?;
    out.set_item("value", r.value)?;
    out.set_item("outer_iters", r.outer_iters)?;
    out.set_item("tangential_grad_norm", r.tangential_grad_norm)?;
    out.set_item("trajectory", r.trajectory.iter().map(|p| p.theta.clone()).collect::<Vec<_>>())?;
    Ok(out)
}

/// Importance-weights a manifold sample by a product-normal prior and, if a
/// model with a likelihood is given, its log-likelihood.
#[pyfunction]
#[pyo3(signature = (points, prior_means, prior_sds, model=None, alpha=0.1, bandwidth=None))]
fn posterior<'py>(
    py: Python<'py>,
    points: Vec<Vec<f64>>,
    prior_means: Vec<f64>,
    prior_sds: Vec<f64>,
    model: Option<&PyModel>,
    alpha: f64,
    bandwidth: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let pts = cloud(points);
    let prior = PriorSpec::gaussian_product(prior_means, prior_sds).map_err(to_py)?;
    let h = match bandwidth {
        Some(h) => h,
        None => solman::posterior::silverman_bandwidth(&pts).map_err(to_py)?,
    };
    let ll = model.and_then(|m| m.inner.log_likelihood.clone());
    let w = match ll {
        Some(f) => posterior_weights(&pts, &prior, |z: &Vector| f(z), h),
        None => posterior_weights(&pts, &prior, |_: &Vector| Ok(0.0), h),
    }
    .map_err(to_py)?;
    let region = credible_region(&w, alpha).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("bandwidth", h)?;
    out.set_item("rho", w.rho.clone())?;
    out.set_item("log_pi", w.log_pi.clone())?;
    out.set_item("log_omega", w.log_omega.clone())?;
    out.set_item("weights", w.normalized_weights())?;
    out.set_item("region", region.member_indices.clone())?;
    out.set_item("mean", posterior_mean(&w).map_err(to_py)?.as_slice().to_vec())?;
    out.set_item("map_index", map_estimate(&w).map_err(to_py)?.index)?;
    out.set_item("frechet_index", frechet_mean(&w).map_err(to_py)?.index)?;
    Ok(out)
}

/// Hausdorff distance between two finite point clouds.
#[pyfunction]
fn hausdorff(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(solman::geometry::hausdorff(&cloud(a), &cloud(b)).map_err(to_py)?.hausdorff)
}

#[pyfunction]
fn silverman_bandwidth(points: Vec<Vec<f64>>) -> PyResult<f64> {
    solman::posterior::silverman_bandwidth(&cloud(points)).map_err(to_py)
}

/// `(rate, r_squared)` of a log-linear fit to an objective trace.
#[pyfunction]
fn convergence_rate(trace: Vec<f64>) -> PyResult<(f64, f64)> {
    let fit = fit_convergence_rate(&trace).map_err(to_py)?;
    Ok((fit.rate, fit.r_squared))
}

#[pymodule]
fn solman_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(maximize, m)?)?;
    m.add_function(wrap_pyfunction!(posterior, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff, m)?)?;
    m.add_function(wrap_pyfunction!(silverman_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_rate, m)?)?;
    Ok(())
}
