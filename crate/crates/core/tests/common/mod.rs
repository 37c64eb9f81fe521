//! Independent oracles and model fixtures shared by the integration tests.
//! The oracles do not call into the library's numerical routines.

#![allow(dead_code)]

use astro_float::{BigFloat, Consts, RoundingMode};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal as NormalDist};
use solman::Vector;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

pub fn v(xs: &[f64]) -> Vector {
    DVector::from_column_slice(xs)
}

pub fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Gaussian-tail constraint evaluated with statrs' normal CDF.
pub fn tail_psi(r0: f64, r1: f64, s0: f64, mu: f64, sigma: f64) -> f64 {
    let n = std_normal();
    n.cdf((r1 - mu) / sigma) - n.cdf((r0 - mu) / sigma) - s0
}

/// Root in σ of the tail constraint at fixed μ, by plain bisection.
pub fn sigma_star(r0: f64, r1: f64, s0: f64, mu: f64) -> f64 {
    let f = |s: f64| tail_psi(r0, r1, s0, mu, s);
    let (mut lo, mut hi) = (1e-9, 1e3);
    assert!(f(lo) > 0.0 && f(hi) < 0.0, "no bracket at mu={mu}");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn normal_sample(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = NormalDist::new(mean, sd).unwrap();
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Mean Gaussian log-likelihood via statrs' pdf.
pub fn mean_loglik(data: &[f64], mu: f64, sigma: f64) -> f64 {
    let n = Normal::new(mu, sigma).unwrap();
    data.iter().map(|x| n.ln_pdf(*x)).sum::<f64>() / data.len() as f64
}

/// Maximizes the mean log-likelihood over the tail curve parametrized by μ on
/// an even grid over `(lo, hi)`. Returns `(μ, σ*(μ), spacing)`.
pub fn grid_mle(r0: f64, r1: f64, s0: f64, data: &[f64], lo: f64, hi: f64, n: usize) -> (f64, f64, f64) {
    let spacing = (hi - lo) / (n - 1) as f64;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..n {
        let mu = lo + spacing * i as f64;
        let sigma = sigma_star(r0, r1, s0, mu);
        let l = mean_loglik(data, mu, sigma);
        if l > best.0 {
            best = (l, mu, sigma);
        }
    }
    (best.1, best.2, spacing)
}

/// `(forward_sup, backward_sup)` by the double loop over all pairs.
pub fn brute_hausdorff(a: &[Vector], b: &[Vector]) -> (f64, f64) {
    let directed = |x: &[Vector], y: &[Vector]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    (directed(a, b), directed(b, a))
}

/// Index minimizing `Σ_j w_j ‖Z_i − Z_j‖²`, first index on ties.
pub fn brute_frechet(points: &[Vector], weights: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, zi) in points.iter().enumerate() {
        let mut cost = 0.0;
        for (zj, wj) in points.iter().zip(weights) {
            cost += wj * (zi - zj).norm_squared();
        }
        if cost < best.0 {
            best = (cost, i);
        }
    }
    best.1
}

/// First index of the largest value.
pub fn brute_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn central_gradient<F: Fn(&Vector) -> f64>(f: F, x: &Vector, h: f64) -> Vector {
    let mut g = Vector::zeros(x.len());
    for j in 0..x.len() {
        let step = h * x[j].abs().max(1.0);
        let (mut up, mut down) = (x.clone(), x.clone());
        up[j] += step;
        down[j] -= step;
        g[j] = (f(&up) - f(&down)) / (2.0 * step);
    }
    g
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Extended-precision importance weights for the Gaussian-tail posterior:
/// Gaussian product prior, IID normal likelihood of `data`, Gaussian KDE
/// scores with the self-term. Returns normalized weights as f64.
pub struct BigWeights {
    prec: usize,
    rm: RoundingMode,
    cc: Consts,
}

impl BigWeights {
    pub fn new(prec: usize) -> Self {
        Self {
            prec,
            rm: RoundingMode::ToEven,
            cc: Consts::new().unwrap(),
        }
    }

    fn f(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.prec)
    }

    fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.prec, self.rm)
    }

    fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.prec, self.rm)
    }

    fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.prec, self.rm)
    }

    fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.prec, self.rm)
    }

    fn exp(&mut self, a: &BigFloat) -> BigFloat {
        a.exp(self.prec, self.rm, &mut self.cc)
    }

    fn ln(&mut self, a: &BigFloat) -> BigFloat {
        a.ln(self.prec, self.rm, &mut self.cc)
    }

    /// log N(x; m, s) up to the additive constant `−½ log 2π`, which cancels.
    fn log_normal(&mut self, x: f64, m: f64, s: f64) -> BigFloat {
        let z = self.div(&self.sub(&self.f(x), &self.f(m)), &self.f(s));
        let half_z2 = self.div(&self.mul(&z, &z), &self.f(2.0));
        let ln_s = self.ln(&self.f(s));
        self.add(&half_z2, &ln_s).neg()
    }

    pub fn weights(
        &mut self,
        points: &[Vector],
        prior_means: &[f64],
        prior_sds: &[f64],
        data: &[f64],
        h: f64,
    ) -> Vec<f64> {
        let n = points.len();
        let two_h2 = self.mul(&self.f(2.0), &self.mul(&self.f(h), &self.f(h)));
        let mut raw = Vec::with_capacity(n);
        for zi in points {
            let mut rho = self.f(0.0);
            for zj in points {
                let mut d2 = self.f(0.0);
                for k in 0..zi.len() {
                    let diff = self.sub(&self.f(zi[k]), &self.f(zj[k]));
                    d2 = self.add(&d2, &self.mul(&diff, &diff));
                }
                let e = self.exp(&self.div(&d2, &two_h2).neg());
                rho = self.add(&rho, &e);
            }
            rho = self.div(&rho, &self.f(n as f64));
            let mut log_pi = self.f(0.0);
            for k in 0..zi.len() {
                let t = self.log_normal(zi[k], prior_means[k], prior_sds[k]);
                log_pi = self.add(&log_pi, &t);
            }
            if !data.is_empty() {
                // Σ log N(x; μ, σ) = −Σ(x−μ)²/(2σ²) − n log σ, constants dropped.
                let mu = self.f(zi[0]);
                let mut ss = self.f(0.0);
                for x in data {
                    let d = self.sub(&self.f(*x), &mu);
                    ss = self.add(&ss, &self.mul(&d, &d));
                }
                let two_s2 = self.mul(&self.f(2.0), &self.mul(&self.f(zi[1]), &self.f(zi[1])));
                let ln_s = self.ln(&self.f(zi[1]));
                let n_ln_s = self.mul(&self.f(data.len() as f64), &ln_s);
                let ll = self.add(&self.div(&ss, &two_s2), &n_ln_s).neg();
                log_pi = self.add(&log_pi, &ll);
            }
            let pi = self.exp(&log_pi);
            raw.push(self.div(&pi, &rho));
        }
        let mut total = self.f(0.0);
        for w in &raw {
            total = self.add(&total, w);
        }
        raw.iter().map(|w| to_f64(&self.div(w, &total))).collect()
    }
}

/// Rounds through a long decimal rendering; far more digits than f64 needs.
pub fn to_f64(x: &BigFloat) -> f64 {
    let s = format!("{x}");
    s.parse::<f64>().unwrap_or_else(|_| panic!("unparseable big float {s}"))
}

/// Linear regression slope of `y` on `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// A built-in model with a box of valid evaluation points.
pub struct Fixture {
    pub model: solman::ModelInstance,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Fixture {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Vector {
        use rand::Rng;
        DVector::from_iterator(
            self.lower.len(),
            self.lower.iter().zip(&self.upper).map(|(l, u)| rng.random_range(*l..*u)),
        )
    }
}

pub fn fairness_table() -> solman::models::FairnessTable {
    solman::models::FairnessTable {
        joint: [[[0.3, 0.2], [0.1, 0.4]], [[0.25, 0.15], [0.2, 0.4]]],
        p_a1: 0.4,
    }
}

/// One fixture per built-in model family.
pub fn fixtures() -> Vec<Fixture> {
    use solman::models::{self, kde, Cells, MomentFn};
    use std::sync::Arc;
    let tail = models::gaussian_tail(-5.0, 2.0, 0.5).unwrap();
    let md = models::missing_data(Cells::from_array(models::missing_data::cell_probabilities(&[0.5; 7]))).unwrap();
    let fair = models::fairness(fairness_table()).unwrap();
    let second: Vec<Vec<f64>> = normal_sample(200, 0.0, 2.0, 5).into_iter().map(|y| vec![y]).collect();
    let moment = models::moment_model(2, vec![MomentFn::gaussian_second_moment()], second).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let blobs = kde::sample_mixture(&kde::elongated_pair(), 60, &mut rng).unwrap();
    let level = models::kde::kde_model(blobs.clone(), 0.6, kde::KdeMode::LevelSet(0.03)).unwrap();
    let ridge = models::kde::kde_model(blobs, 0.6, kde::KdeMode::Ridge(1)).unwrap();
    let normal = solman::ModelInstance::new(
        "standard_normal_level_set",
        kde::level_set_generator(Arc::new(kde::StandardNormalDensity { dim: 2 }), 0.05),
    );
    vec![
        Fixture { model: tail, lower: vec![-8.0, 0.3], upper: vec![6.0, 6.0] },
        Fixture { model: md, lower: vec![0.05; 7], upper: vec![0.95; 7] },
        Fixture { model: fair, lower: vec![0.0; 4], upper: vec![1.0; 4] },
        Fixture { model: moment, lower: vec![-3.0, -3.0], upper: vec![3.0, 3.0] },
        Fixture { model: level, lower: vec![-3.5, -2.0], upper: vec![3.5, 2.0] },
        Fixture { model: ridge, lower: vec![-3.0, -1.5], upper: vec![3.0, 1.5] },
        Fixture { model: normal, lower: vec![-3.0, -3.0], upper: vec![3.0, 3.0] },
    ]
}

/// Central differences of `Ψ`, column by column.
pub fn fd_jacobian(g: &solman::GeneratorSpec, x: &Vector, h: f64) -> solman::Matrix {
    let s = g.codim();
    let mut j = solman::Matrix::zeros(s, x.len());
    for c in 0..x.len() {
        let step = h * x[c].abs().max(1.0);
        let (mut up, mut down) = (x.clone(), x.clone());
        up[c] += step;
        down[c] -= step;
        let d = (g.eval_psi(&up).unwrap() - g.eval_psi(&down).unwrap()) / (2.0 * step);
        j.set_column(c, &d);
    }
    j
}
