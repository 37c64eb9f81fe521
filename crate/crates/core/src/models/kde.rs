//! Density level sets `{p = λ}` and density ridges as solution manifolds.
//!
//! A `k`-ridge is where the gradient is orthogonal to the `d − k` Hessian
//! eigenvectors with the smallest eigenvalues, and those eigenvalues are
//! negative. Eigenvalues are sorted in decreasing order, so the curvature
//! condition is `λ_{k+1} < 0`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ModelInstance;
use crate::error::{Error, Result};
use crate::generator::{GeneratorSpec, Matrix, Vector};

/// A smooth density with analytic first and second derivatives.
pub trait Density: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> Matrix;
}

/// Isotropic Gaussian kernel density estimator with bandwidth `h`.
#[derive(Debug, Clone)]
pub struct GaussianKde {
    data: Vec<Vector>,
    h: f64,
    norm: f64,
}

impl GaussianKde {
    pub fn new(data: Vec<Vector>, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameters(format!("bandwidth must be positive, got {h}")));
        }
        let d = data.first().map(|x| x.len()).ok_or(Error::EmptyCloud)?;
        if let Some(bad) = data.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let norm = 1.0 / (data.len() as f64 * h.powi(d as i32) * (2.0 * PI).powf(d as f64 / 2.0));
        Ok(Self { data, h, norm })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn data(&self) -> &[Vector] {
        &self.data
    }

    /// Calls `f(diff, k)` for every data point with `diff = x − x_i` and the
    /// unnormalized kernel weight `k`, reusing one buffer.
    fn for_each_term(&self, x: &Vector, mut f: impl FnMut(&[f64], f64)) {
        let inv = -0.5 / (self.h * self.h);
        let mut diff = vec![0.0; x.len()];
        for xi in &self.data {
            let mut r2 = 0.0;
            for ((d, a), b) in diff.iter_mut().zip(x.iter()).zip(xi.iter()) {
                *d = a - b;
                r2 += *d * *d;
            }
            f(&diff, (inv * r2).exp());
        }
    }
}

impl Density for GaussianKde {
    fn dim(&self) -> usize {
        self.data[0].len()
    }

    fn value(&self, x: &Vector) -> f64 {
        let mut sum = 0.0;
        self.for_each_term(x, |_, k| sum += k);
        self.norm * sum
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let h2 = self.h * self.h;
        let mut g = Vector::zeros(x.len());
        self.for_each_term(x, |diff, k| {
            for (gj, dj) in g.iter_mut().zip(diff) {
                *gj -= dj * k;
            }
        });
        g * (self.norm / h2)
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        let d = x.len();
        let h2 = self.h * self.h;
        let mut hess = Matrix::zeros(d, d);
        let mut ksum = 0.0;
        self.for_each_term(x, |diff, k| {
            ksum += k;
            for j in 0..d {
                let kj = k * diff[j];
                for i in j..d {
                    hess[(i, j)] += kj * diff[i];
                }
            }
        });
        let scale = self.norm / (h2 * h2);
        for j in 0..d {
            for i in j..d {
                let v = hess[(i, j)] * scale;
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
            hess[(j, j)] -= self.norm * ksum / h2;
        }
        hess
    }
}

/// `N(0, I_d)`, for checks against closed-form level sets.
#[derive(Debug, Clone, Copy)]
pub struct StandardNormalDensity {
    pub dim: usize,
}

impl StandardNormalDensity {
    /// Radius of the level set `{p = λ}` in two dimensions.
    pub fn level_radius_2d(level: f64) -> Option<f64> {
        let r2 = -2.0 * (2.0 * PI * level).ln();
        (r2 > 0.0).then(|| r2.sqrt())
    }
}

impl Density for StandardNormalDensity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        (-0.5 * x.norm_squared()).exp() / (2.0 * PI).powf(self.dim as f64 / 2.0)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        -x * self.value(x)
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        let p = self.value(x);
        (x * x.transpose() - Matrix::identity(self.dim, self.dim)) * p
    }
}

/// Hessian eigen-decomposition sorted by decreasing eigenvalue, with each
/// eigenvector's largest-magnitude component made positive.
pub fn sorted_eigen(hess: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let sym = (hess + hess.transpose()) * 0.5;
    let d = sym.nrows();
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenFailure("symmetric eigen-decomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(d, d);
    for (c, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let lead = v.iamax();
        if v[lead] < 0.0 {
            v = -v;
        }
        vectors.set_column(c, &v);
    }
    Ok((values, vectors))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeDiagnostics {
    pub eigenvalues: Vec<f64>,
    /// `λ_k − λ_{k+1}`; infinite for `k = 0`.
    pub eigengap: f64,
    /// The eigengap is below `1e-8`; the finite-difference Jacobian may be unreliable.
    pub near_crossing: bool,
    pub curvature_ok: bool,
}

pub fn ridge_diagnostics(density: &dyn Density, k: usize, x: &Vector) -> Result<RidgeDiagnostics> {
    let (values, _) = sorted_eigen(&density.hessian(x))?;
    let eigengap = if k == 0 { f64::INFINITY } else { values[k - 1] - values[k] };
    Ok(RidgeDiagnostics {
        curvature_ok: values[k] < 0.0,
        near_crossing: eigengap < 1e-8,
        eigengap,
        eigenvalues: values,
    })
}

pub fn level_set_generator(density: Arc<dyn Density>, level: f64) -> GeneratorSpec {
    let d = density.dim();
    let (p1, p2) = (density.clone(), density);
    GeneratorSpec::new(d, 1, move |x| Ok(DVector::from_element(1, p1.value(x) - level)))
        .expect("codimension 1")
        .with_analytic_jacobian(move |x| Ok(Matrix::from_row_slice(1, x.len(), p2.gradient(x).as_slice())))
}

/// `Ψ(x) = V_kᵀ ∇p(x)`, where `V_k` holds the `d − k` trailing eigenvectors of
/// the Hessian. Jacobian by finite differences; accepted points must also
/// satisfy `λ_{k+1}(x) < 0`.
pub fn ridge_generator(density: Arc<dyn Density>, k: usize) -> Result<GeneratorSpec> {
    let d = density.dim();
    if k >= d {
        return Err(Error::InvalidParameters(format!("ridge dimension {k} must be below {d}")));
    }
    let s = d - k;
    let (p1, p2) = (density.clone(), density);
    Ok(GeneratorSpec::new(d, s, move |x| {
        let (_, vectors) = sorted_eigen(&p1.hessian(x))?;
        let trailing = vectors.columns(k, s);
        Ok(trailing.tr_mul(&p1.gradient(x)))
    })?
    .with_acceptance(move |x| {
        sorted_eigen(&p2.hessian(x)).is_ok_and(|(values, _)| values[k] < 0.0)
    }))
}

/// Linear-interpolation (type 7) quantile of the density at the observations.
pub fn level_from_quantile(kde: &GaussianKde, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameters(format!("quantile must lie in [0,1], got {q}")));
    }
    let mut values: Vec<f64> = kde.data().iter().map(|x| kde.value(x)).collect();
    values.sort_by(f64::total_cmp);
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(values[lo] + (pos - lo as f64) * (values[hi] - values[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdeMode {
    LevelSet(f64),
    Ridge(usize),
}

pub fn kde_model(data: Vec<Vector>, h: f64, mode: KdeMode) -> Result<ModelInstance> {
    let kde = GaussianKde::new(data, h)?;
    let density: Arc<dyn Density> = Arc::new(kde);
    Ok(match mode {
        KdeMode::LevelSet(level) => ModelInstance::new("kde_level_set", level_set_generator(density, level)),
        KdeMode::Ridge(k) => ModelInstance::new("kde_ridge", ridge_generator(density, k)?),
    })
}

/// Axis-aligned Gaussian mixture used to synthesize point data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

pub fn sample_mixture<R: Rng>(components: &[MixtureComponent], n: usize, rng: &mut R) -> Result<Vec<Vector>> {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.is_empty() || !(total > 0.0) {
        return Err(Error::InvalidParameters("mixture needs positive weights".into()));
    }
    let d = components[0].mean.len();
    if components.iter().any(|c| c.mean.len() != d || c.sd.len() != d || c.weight < 0.0) {
        return Err(Error::InvalidParameters("inconsistent mixture components".into()));
    }
    Ok((0..n)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            let comp = components
                .iter()
                .find(|c| {
                    u -= c.weight;
                    u < 0.0
                })
                .unwrap_or(&components[components.len() - 1]);
            DVector::from_iterator(
                d,
                comp.mean.iter().zip(&comp.sd).map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                }),
            )
        })
        .collect())
}

/// Three well-separated blobs in three dimensions, standing in for flow-cytometry data.
pub fn three_blob_mixture() -> Vec<MixtureComponent> {
    vec![
        MixtureComponent {
            weight: 0.4,
            mean: vec![0.0, 0.0, 0.0],
            sd: vec![1.0, 0.8, 0.6],
        },
        MixtureComponent {
            weight: 0.35,
            mean: vec![5.0, 1.0, 0.0],
            sd: vec![0.7, 1.0, 0.8],
        },
        MixtureComponent {
            weight: 0.25,
            mean: vec![1.0, 5.0, 3.0],
            sd: vec![0.8, 0.7, 1.0],
        },
    ]
}

/// Two Gaussians along the first axis, elongated overall, for ridge tests.
pub fn elongated_pair() -> Vec<MixtureComponent> {
    vec![
        MixtureComponent {
            weight: 0.5,
            mean: vec![-1.5, 0.0],
            sd: vec![0.8, 0.4],
        },
        MixtureComponent {
            weight: 0.5,
            mean: vec![1.5, 0.0],
            sd: vec![0.8, 0.4],
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn v(xs: &[f64]) -> Vector {
        DVector::from_column_slice(xs)
    }

    fn small_kde() -> GaussianKde {
        GaussianKde::new(vec![v(&[0.0, 0.0]), v(&[1.0, 0.5]), v(&[-0.5, 1.5])], 0.7).unwrap()
    }

    #[test]
    fn kde_derivatives_match_differences() {
        let kde = small_kde();
        let x = v(&[0.3, 0.4]);
        let h = 1e-5;
        for j in 0..2 {
            let mut e = Vector::zeros(2);
            e[j] = h;
            let fd = (kde.value(&(&x + &e)) - kde.value(&(&x - &e))) / (2.0 * h);
            assert!((fd - kde.gradient(&x)[j]).abs() < 1e-8);
            let fd_col = (kde.gradient(&(&x + &e)) - kde.gradient(&(&x - &e))) / (2.0 * h);
            assert!((fd_col - kde.hessian(&x).column(j)).amax() < 1e-8);
        }
        let hess = kde.hessian(&x);
        assert!((&hess - hess.transpose()).amax() < 1e-12);
    }

    #[test]
    fn single_point_kde_is_normal_density() {
        let kde = GaussianKde::new(vec![v(&[0.0, 0.0])], 1.0).unwrap();
        let x = v(&[0.4, -1.1]);
        let exact = StandardNormalDensity { dim: 2 };
        assert!((kde.value(&x) - exact.value(&x)).abs() < 1e-16);
    }

    #[test]
    fn level_radius() {
        let r = StandardNormalDensity::level_radius_2d(0.05).unwrap();
        let p = StandardNormalDensity { dim: 2 }.value(&v(&[r, 0.0]));
        assert!((p - 0.05).abs() < 1e-15);
        assert!(StandardNormalDensity::level_radius_2d(1.0).is_none());
    }

    #[test]
    fn eigen_sorting_and_signs() {
        let m = Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 3.0]);
        let (vals, vecs) = sorted_eigen(&m).unwrap();
        assert_eq!(vals, vec![3.0, -1.0]);
        assert!(vecs[(1, 0)] > 0.0 && vecs[(0, 1)] > 0.0);
    }

    #[test]
    fn quantile_level() {
        let kde = small_kde();
        let mut dens: Vec<f64> = kde.data().iter().map(|x| kde.value(x)).collect();
        dens.sort_by(f64::total_cmp);
        assert_eq!(level_from_quantile(&kde, 0.0).unwrap(), dens[0]);
        assert_eq!(level_from_quantile(&kde, 0.5).unwrap(), dens[1]);
        let q25 = level_from_quantile(&kde, 0.25).unwrap();
        assert!((q25 - 0.5 * (dens[0] + dens[1])).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs() {
        assert!(GaussianKde::new(vec![v(&[0.0])], 0.0).is_err());
        assert!(ridge_generator(Arc::new(small_kde()), 2).is_err());
        assert!(kde_model(vec![], 1.0, KdeMode::LevelSet(0.1)).is_err());
    }

    #[test]
    fn mixture_sampling_shape() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts = sample_mixture(&three_blob_mixture(), 50, &mut rng).unwrap();
        assert_eq!(pts.len(), 50);
        assert!(pts.iter().all(|p| p.len() == 3));
    }
}
