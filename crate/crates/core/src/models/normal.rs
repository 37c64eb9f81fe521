//! Standard normal density and distribution function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `φ(z)`
pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `Φ(z)` through the complementary error function, accurate in both tails.
pub fn cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Log density of `N(mean, sd²)` at `x`.
pub fn log_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(cdf(0.0), 0.5);
        assert!((cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        assert!((cdf(-8.0) - 6.220960574271785e-16).abs() < 1e-28);
        assert!((pdf(0.0) - 0.3989422804014327).abs() < 1e-16);
    }
}
