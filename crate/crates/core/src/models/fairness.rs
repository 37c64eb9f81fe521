//! Test-fair post-processing of a binary classifier.
//!
//! A randomized classifier `Q` draws `Q = 1` with probability `q_{w,a}` given the
//! original prediction `W = w` and the protected attribute `A = a`. Test
//! fairness asks `P(Y=1 | Q=s, A=0) = P(Y=1 | Q=s, A=1)` for `s ∈ {0, 1}`.
//! Each equality is a ratio of linear forms in `q`; the generator stores the
//! cross-multiplied (cleared) form, which stays finite where a denominator
//! vanishes.
//!
//! Parameter order: `θ = (q00, q01, q10, q11)` with `q_wa` at index `2w + a`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ModelInstance;
use crate::error::{Error, Result};
use crate::generator::{GeneratorSpec, Matrix, Vector};
use crate::mle::ObjectiveSpec;

#[inline]
pub fn q_index(w: usize, a: usize) -> usize {
    2 * w + a
}

/// `P(W=w, Y=y | A=a)` stored as `joint[a][w][y]`, plus `P(A=1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessTable {
    pub joint: [[[f64; 2]; 2]; 2],
    #[serde(default = "half")]
    pub p_a1: f64,
}

fn half() -> f64 {
    0.5
}

impl FairnessTable {
    pub fn validate(&self) -> Result<()> {
        for a in 0..2 {
            let cells = self.joint[a].iter().flatten();
            if cells.clone().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidTable(format!("negative entry for A={a}")));
            }
            let total: f64 = cells.sum();
            if (total - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidTable(format!(
                    "P(W,Y|A={a}) sums to {total}, expected 1"
                )));
            }
        }
        if !(self.p_a1 > 0.0 && self.p_a1 < 1.0) {
            return Err(Error::InvalidTable(format!("P(A=1) must lie in (0,1), got {}", self.p_a1)));
        }
        Ok(())
    }

    fn p_w(&self, w: usize, a: usize) -> f64 {
        self.joint[a][w][0] + self.joint[a][w][1]
    }

    fn p_w_y1(&self, w: usize, a: usize) -> f64 {
        self.joint[a][w][1]
    }

    fn p_a(&self, a: usize) -> f64 {
        if a == 1 {
            self.p_a1
        } else {
            1.0 - self.p_a1
        }
    }

    /// Numerator and denominator of `P(Y=1 | Q=s, A=a)` up to the common factor.
    fn ratio_parts(&self, q: &[f64], s: usize, a: usize) -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        for w in 0..2 {
            let qs = if s == 1 { q[q_index(w, a)] } else { 1.0 - q[q_index(w, a)] };
            num += qs * self.p_w_y1(w, a);
            den += qs * self.p_w(w, a);
        }
        (num, den)
    }

    /// Cleared constraints `N_{s,0} D_{s,1} − N_{s,1} D_{s,0}` for `s = 1, 0`.
    pub fn cleared(&self, q: &[f64]) -> [f64; 2] {
        [1, 0].map(|s| {
            let (n0, d0) = self.ratio_parts(q, s, 0);
            let (n1, d1) = self.ratio_parts(q, s, 1);
            n0 * d1 - n1 * d0
        })
    }

    /// Ratio-form differences `N_{s,0}/D_{s,0} − N_{s,1}/D_{s,1}`; `None` when a
    /// denominator is zero.
    pub fn ratio_form(&self, q: &[f64]) -> Option<[f64; 2]> {
        let mut out = [0.0; 2];
        for (k, s) in [1, 0].into_iter().enumerate() {
            let (n0, d0) = self.ratio_parts(q, s, 0);
            let (n1, d1) = self.ratio_parts(q, s, 1);
            if d0 == 0.0 || d1 == 0.0 {
                return None;
            }
            out[k] = n0 / d0 - n1 / d1;
        }
        Some(out)
    }

    /// Smallest of the four ratio denominators at `q`.
    pub fn min_denominator(&self, q: &[f64]) -> f64 {
        [(1, 0), (1, 1), (0, 0), (0, 1)]
            .into_iter()
            .map(|(s, a)| self.ratio_parts(q, s, a).1)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn cleared_jacobian(&self, q: &[f64]) -> Matrix {
        let mut j = Matrix::zeros(2, 4);
        for (row, s) in [1usize, 0].into_iter().enumerate() {
            let sign = if s == 1 { 1.0 } else { -1.0 };
            let (n0, d0) = self.ratio_parts(q, s, 0);
            let (n1, d1) = self.ratio_parts(q, s, 1);
            for w in 0..2 {
                j[(row, q_index(w, 0))] = sign * (self.p_w_y1(w, 0) * d1 - n1 * self.p_w(w, 0));
                j[(row, q_index(w, 1))] = sign * (n0 * self.p_w(w, 1) - self.p_w_y1(w, 1) * d0);
            }
        }
        j
    }

    /// Expected squared error `E[(Y − q_{W,A})²]` of the randomized score.
    pub fn risk(&self, q: &[f64]) -> f64 {
        let mut r = 0.0;
        for a in 0..2 {
            for w in 0..2 {
                for y in 0..2 {
                    let e = y as f64 - q[q_index(w, a)];
                    r += self.p_a(a) * self.joint[a][w][y] * e * e;
                }
            }
        }
        r
    }

    pub fn risk_gradient(&self, q: &[f64]) -> Vector {
        let mut g = Vector::zeros(4);
        for a in 0..2 {
            for w in 0..2 {
                for y in 0..2 {
                    let e = y as f64 - q[q_index(w, a)];
                    g[q_index(w, a)] -= 2.0 * self.p_a(a) * self.joint[a][w][y] * e;
                }
            }
        }
        g
    }
}

fn check_closed_cube(q: &Vector) -> Result<()> {
    if q.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(Error::Domain("classifier probabilities must lie in [0,1]".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fairness {
    pub table: FairnessTable,
}

impl Fairness {
    pub fn new(table: FairnessTable) -> Result<Self> {
        table.validate()?;
        Ok(Self { table })
    }

    pub fn generator(&self) -> GeneratorSpec {
        let (t1, t2) = (self.table, self.table);
        GeneratorSpec::new(4, 2, move |q| {
            check_closed_cube(q)?;
            Ok(DVector::from_row_slice(&t1.cleared(q.as_slice())))
        })
        .expect("d=4, s=2 is valid")
        .with_analytic_jacobian(move |q| {
            check_closed_cube(q)?;
            Ok(t2.cleared_jacobian(q.as_slice()))
        })
    }

    /// Negated risk, for use with the constrained maximizer.
    pub fn negative_risk(&self) -> ObjectiveSpec {
        let (t1, t2) = (self.table, self.table);
        ObjectiveSpec::new(
            move |q| {
                check_closed_cube(q)?;
                Ok(-t1.risk(q.as_slice()))
            },
            move |q| {
                check_closed_cube(q)?;
                Ok(-t2.risk_gradient(q.as_slice()))
            },
        )
    }

    pub fn instance(&self) -> ModelInstance {
        let mut inst = ModelInstance::new("fairness", self.generator());
        inst.objective = Some(self.negative_risk());
        inst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_table() -> FairnessTable {
        FairnessTable {
            joint: [
                [[0.35, 0.15], [0.1, 0.4]],
                [[0.45, 0.2], [0.05, 0.3]],
            ],
            p_a1: 0.4,
        }
    }

    #[test]
    fn identical_groups_satisfy_equal_q() {
        let mut t = example_table();
        t.joint[1] = t.joint[0];
        let q = [0.3, 0.3, 0.8, 0.8];
        assert_eq!(t.cleared(&q), [0.0, 0.0]);
    }

    #[test]
    fn degenerate_q_is_finite_in_cleared_form() {
        let t = example_table();
        let g = Fairness::new(t).unwrap().generator();
        let v = g.eval_psi(&DVector::zeros(4)).unwrap();
        assert!(v.iter().all(|x| x.is_finite()));
        assert!(t.ratio_form(&[0.0; 4]).is_none());
    }

    #[test]
    fn table_validation() {
        let mut t = example_table();
        t.joint[0][0][0] = 0.5;
        assert!(matches!(Fairness::new(t), Err(Error::InvalidTable(_))));
        let mut t = example_table();
        t.p_a1 = 1.0;
        assert!(Fairness::new(t).is_err());
    }

    #[test]
    fn risk_gradient_matches_differences() {
        let f = Fairness::new(example_table()).unwrap();
        let obj = f.negative_risk();
        let err = obj.gradient_check(&DVector::from_vec(vec![0.2, 0.4, 0.6, 0.8])).unwrap();
        assert!(err < 1e-7);
    }
}
