use nalgebra::SVD;

use crate::generator::{Matrix, Vector};

/// Singular values below this are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Smallest of the `min(s, d)` singular values of an `s×d` matrix.
pub fn smallest_singular_value(m: &Matrix) -> f64 {
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Orthonormal basis (as columns, `d×r`) of the row space of `m`,
/// keeping directions whose singular value exceeds `RANK_TOL · σ_max`.
pub fn row_space_basis(m: &Matrix) -> Matrix {
    let svd = SVD::new(m.clone(), false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > RANK_TOL * sigma_max.max(1.0) && **s > 0.0)
        .map(|(i, _)| i)
        .collect();
    let mut basis = Matrix::zeros(m.ncols(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    basis
}

/// Component of `v` orthogonal to the column span of the orthonormal `basis`.
pub fn orthogonal_remainder(basis: &Matrix, v: &Vector) -> Vector {
    if basis.ncols() == 0 {
        return v.clone();
    }
    let coeffs = basis.tr_mul(v);
    v - basis * coeffs
}

/// Minimum-norm solution of `m · x = b` through the truncated pseudo-inverse.
pub fn min_norm_solve(m: &Matrix, b: &Vector) -> Vector {
    let svd = SVD::new(m.clone(), true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = RANK_TOL * sigma_max.max(1.0);
    svd.solve(b, eps).unwrap_or_else(|_| Vector::zeros(m.ncols()))
}
