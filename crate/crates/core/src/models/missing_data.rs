//! Binary response `Y` subject to missingness, binary covariate `X`.
//!
//! Parameters `θ = (ζ00, ζ01, ζ10, ζ11, μ0, μ1, ξ)` with
//! `ζ_xy = P(R=1 | X=x, Y=y)`, `μ_x = P(Y=1 | X=x)`, `ξ = P(X=1)`. The
//! observable cells `P(x, y, R=1)` and `P(x, R=0)` give six equations.
//!
//! The six model expressions always sum to one, so for targets summing to one
//! the Jacobian rows are linearly dependent: its rank is at most five and the
//! solution set is two-dimensional.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ModelInstance;
use crate::error::{Error, Result};
use crate::generator::{GeneratorSpec, Matrix, Vector};

pub const ZETA00: usize = 0;
pub const ZETA01: usize = 1;
pub const ZETA10: usize = 2;
pub const ZETA11: usize = 3;
pub const MU0: usize = 4;
pub const MU1: usize = 5;
pub const XI: usize = 6;

/// Probabilities (or counts) of the six observable cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cells {
    pub x1_y1_r1: f64,
    pub x1_y0_r1: f64,
    pub x0_y1_r1: f64,
    pub x0_y0_r1: f64,
    pub x0_r0: f64,
    pub x1_r0: f64,
}

impl Cells {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.x1_y1_r1,
            self.x1_y0_r1,
            self.x0_y1_r1,
            self.x0_y0_r1,
            self.x0_r0,
            self.x1_r0,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            x1_y1_r1: a[0],
            x1_y0_r1: a[1],
            x0_y1_r1: a[2],
            x0_y0_r1: a[3],
            x0_r0: a[4],
            x1_r0: a[5],
        }
    }

    pub fn total(&self) -> f64 {
        self.to_array().iter().sum()
    }
}

/// Model-implied cell probabilities, in [`Cells`] order.
pub fn cell_probabilities(theta: &[f64]) -> [f64; 6] {
    let (z00, z01, z10, z11) = (theta[ZETA00], theta[ZETA01], theta[ZETA10], theta[ZETA11]);
    let (m0, m1, xi) = (theta[MU0], theta[MU1], theta[XI]);
    [
        z11 * m1 * xi,
        z10 * (1.0 - m1) * xi,
        z01 * m0 * (1.0 - xi),
        z00 * (1.0 - m0) * (1.0 - xi),
        (1.0 - z01) * m0 * (1.0 - xi) + (1.0 - z00) * (1.0 - m0) * (1.0 - xi),
        (1.0 - z11) * m1 * xi + (1.0 - z10) * (1.0 - m1) * xi,
    ]
}

/// Jacobian of [`cell_probabilities`], 6×7.
pub fn cell_jacobian(theta: &[f64]) -> Matrix {
    let (z00, z01, z10, z11) = (theta[ZETA00], theta[ZETA01], theta[ZETA10], theta[ZETA11]);
    let (m0, m1, xi) = (theta[MU0], theta[MU1], theta[XI]);
    let mut j = Matrix::zeros(6, 7);
    // P(1,1,1) = ζ11 μ1 ξ
    j[(0, ZETA11)] = m1 * xi;
    j[(0, MU1)] = z11 * xi;
    j[(0, XI)] = z11 * m1;
    // P(1,0,1) = ζ10 (1−μ1) ξ
    j[(1, ZETA10)] = (1.0 - m1) * xi;
    j[(1, MU1)] = -z10 * xi;
    j[(1, XI)] = z10 * (1.0 - m1);
    // P(0,1,1) = ζ01 μ0 (1−ξ)
    j[(2, ZETA01)] = m0 * (1.0 - xi);
    j[(2, MU0)] = z01 * (1.0 - xi);
    j[(2, XI)] = -z01 * m0;
    // P(0,0,1) = ζ00 (1−μ0)(1−ξ)
    j[(3, ZETA00)] = (1.0 - m0) * (1.0 - xi);
    j[(3, MU0)] = -z00 * (1.0 - xi);
    j[(3, XI)] = -z00 * (1.0 - m0);
    // P(X=0,R=0)
    j[(4, ZETA01)] = -m0 * (1.0 - xi);
    j[(4, ZETA00)] = -(1.0 - m0) * (1.0 - xi);
    j[(4, MU0)] = ((1.0 - z01) - (1.0 - z00)) * (1.0 - xi);
    j[(4, XI)] = -((1.0 - z01) * m0 + (1.0 - z00) * (1.0 - m0));
    // P(X=1,R=0)
    j[(5, ZETA11)] = -m1 * xi;
    j[(5, ZETA10)] = -(1.0 - m1) * xi;
    j[(5, MU1)] = ((1.0 - z11) - (1.0 - z10)) * xi;
    j[(5, XI)] = (1.0 - z11) * m1 + (1.0 - z10) * (1.0 - m1);
    j
}

fn check_open_cube(theta: &Vector) -> Result<()> {
    if theta.iter().all(|v| *v > 0.0 && *v < 1.0) {
        Ok(())
    } else {
        Err(Error::Domain("probability parameters must lie in (0,1)".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingData {
    pub targets: Cells,
}

impl MissingData {
    pub fn new(targets: Cells) -> Result<Self> {
        let arr = targets.to_array();
        if arr.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidTargets("cell probabilities must be nonnegative".into()));
        }
        if (targets.total() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidTargets(format!(
                "cell probabilities sum to {}, expected 1",
                targets.total()
            )));
        }
        Ok(Self { targets })
    }

    /// Plug-in model from observed cell counts (empirical frequencies).
    pub fn from_counts(counts: Cells) -> Result<Self> {
        let arr = counts.to_array();
        if arr.iter().any(|c| !(*c >= 0.0) || c.fract() != 0.0) {
            return Err(Error::InvalidTargets("counts must be nonnegative integers".into()));
        }
        let total = counts.total();
        if total <= 0.0 {
            return Err(Error::InvalidTargets("no observations".into()));
        }
        Self::new(Cells::from_array(arr.map(|c| c / total)))
    }

    /// Targets implied by a parameter vector, so that `Ψ(θ) = 0`.
    pub fn from_parameters(theta: &[f64]) -> Result<Self> {
        if theta.len() != 7 || theta.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::InvalidTargets("need seven parameters in (0,1)".into()));
        }
        Self::new(Cells::from_array(cell_probabilities(theta)))
    }

    pub fn generator(&self) -> GeneratorSpec {
        let targets = self.targets.to_array();
        GeneratorSpec::new(7, 6, move |x| {
            check_open_cube(x)?;
            let p = cell_probabilities(x.as_slice());
            Ok(DVector::from_iterator(6, p.iter().zip(&targets).map(|(a, b)| a - b)))
        })
        .expect("d=7, s=6 is valid")
        .with_analytic_jacobian(|x| {
            check_open_cube(x)?;
            Ok(cell_jacobian(x.as_slice()))
        })
    }

    pub fn instance(&self) -> ModelInstance {
        ModelInstance::new("missing_data", self.generator())
    }
}
