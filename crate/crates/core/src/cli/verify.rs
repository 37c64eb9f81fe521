//! `verify`: recompute a report's numbers from the exported artifacts.

use log::info;

use super::commands::posterior_likelihood;
use super::io;
use super::report::{summarize_fits, RunReport};
use super::{CliError, Loaded};
use crate::generator::Vector;
use crate::geometry::smoothness_of_points;
use crate::mle::tangential_gradient_norm;
use crate::posterior::{credible_region, frechet_mean, map_estimate, posterior_mean, WeightedPointCloud};

pub const REPORT_TOL: f64 = 1e-9;
pub const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    passed: usize,
}

impl Checks {
    fn close(&mut self, what: &str, reported: f64, recomputed: f64, tol: f64) {
        let scale = 1f64.max(reported.abs()).max(recomputed.abs());
        let ok = (reported - recomputed).abs() <= tol * scale || reported == recomputed;
        self.record(what, ok, || format!("reported {reported}, recomputed {recomputed}"));
    }

    fn abs_close(&mut self, what: &str, written: f64, recomputed: f64, tol: f64) {
        let ok = (written - recomputed).abs() <= tol;
        self.record(what, ok, || format!("written {written}, recomputed {recomputed}"));
    }

    fn equal<T: PartialEq + std::fmt::Debug>(&mut self, what: &str, reported: T, recomputed: T) {
        let ok = reported == recomputed;
        self.record(what, ok, || format!("reported {reported:?}, recomputed {recomputed:?}"));
    }

    fn vec_close(&mut self, what: &str, reported: &[f64], recomputed: &[f64], tol: f64) {
        if reported.len() != recomputed.len() {
            self.record(what, false, || "length differs".into());
            return;
        }
        for (j, (a, b)) in reported.iter().zip(recomputed).enumerate() {
            self.close(&format!("{what}[{j}]"), *a, *b, tol);
        }
    }

    fn record(&mut self, what: &str, ok: bool, detail: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            self.failures.push(format!("{what}: {}", detail()));
        }
    }
}

pub fn cmd_verify(loaded: &Loaded) -> Result<(), CliError> {
    let report_path = loaded
        .output(&loaded.config.outputs.report_path)
        .ok_or_else(|| CliError::Config("verify needs outputs.report_path".into()))?;
    let text = std::fs::read_to_string(&report_path).map_err(|e| CliError::Io(format!("{}: {e}", report_path.display())))?;
    let report: RunReport =
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", report_path.display())))?;
    let model = loaded.config.model.build(&loaded.base, None)?;
    let mut checks = Checks::default();

    if let Some(s) = &report.sample {
        let path = loaded
            .output(&loaded.config.outputs.cloud_path)
            .ok_or_else(|| CliError::Config("verifying a sample run needs outputs.cloud_path".into()))?;
        let cloud = io::read_cloud(&path)?;
        for (i, (p, r)) in cloud.points.iter().zip(&cloud.residuals).enumerate() {
            let again = model.generator.residual(p)?;
            checks.abs_close(&format!("residual row {i}"), *r, again, RESIDUAL_TOL);
        }
        checks.equal("n_points", s.n_points, cloud.len());
        checks.close("acceptance_rate", s.acceptance_rate, cloud.len() as f64 / s.attempts as f64, REPORT_TOL);
        let mean_it = cloud.iterations.iter().sum::<usize>() as f64 / cloud.len() as f64;
        checks.close("mean_iterations", s.mean_iterations, mean_it, REPORT_TOL);
        let max_res = cloud.residuals.iter().copied().fold(0.0, f64::max);
        checks.close("max_residual", s.max_residual, max_res, REPORT_TOL);
        if let Some(sm) = &s.smoothness {
            let again = smoothness_of_points(&model.generator, &cloud.points)?;
            checks.close("sigma_min", sm.sigma_min, again.sigma_min, REPORT_TOL);
            checks.close("lambda0_hat", sm.lambda0_hat, again.lambda0_hat, REPORT_TOL);
            checks.equal("rank_deficient", sm.rank_deficient, again.rank_deficient);
        }
        match (&s.convergence, loaded.output(&loaded.config.outputs.trace_path)) {
            (Some(c), Some(trace_path)) => {
                let traces = io::read_traces(&trace_path)?;
                checks.equal("traced chains", traces.len(), cloud.len());
                let again = summarize_fits(traces.iter().map(|(_, t)| t.as_slice()))
                    .ok_or_else(|| CliError::NoResult("no fittable traces".into()))?;
                checks.equal("chains_fitted", c.chains_fitted, again.chains_fitted);
                checks.close("median_rate", c.median_rate, again.median_rate, REPORT_TOL);
                checks.close("median_r_squared", c.median_r_squared, again.median_r_squared, REPORT_TOL);
                checks.close("min_r_squared", c.min_r_squared, again.min_r_squared, REPORT_TOL);
            }
            (Some(_), None) => info!("no trace file; convergence summary not checked"),
            _ => {}
        }
    }

    if let Some(m) = &report.mle {
        let obj = model
            .objective
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("model {} has no objective", model.name)))?;
        let theta = Vector::from_column_slice(&m.best_theta);
        checks.close("best_value", m.best_value, obj.value(&theta)?, REPORT_TOL);
        let tang = tangential_gradient_norm(&model.generator, &theta, &obj.gradient(&theta)?)?;
        checks.close("tangential_grad_norm", m.tangential_grad_norm, tang, REPORT_TOL);
        checks.equal("n_converged", m.n_converged, m.starts.iter().filter(|s| s.converged).count());
        for (i, s) in m.starts.iter().enumerate() {
            if let (Some(t), Some(v)) = (&s.theta, s.value) {
                checks.close(&format!("start {i} value"), v, obj.value(&Vector::from_column_slice(t))?, REPORT_TOL);
            }
        }
    }

    if let Some(p) = &report.posterior {
        let section = loaded
            .config
            .posterior
            .as_ref()
            .ok_or_else(|| CliError::Config("posterior section missing".into()))?;
        let path = loaded
            .output(&loaded.config.outputs.cloud_path)
            .ok_or_else(|| CliError::Config("verifying a posterior run needs outputs.cloud_path".into()))?;
        let rows = io::read_weighted(&path)?;
        let h = section.bandwidth.resolve(&rows.points)?;
        checks.close("bandwidth", p.bandwidth, h, REPORT_TOL);
        let rho = crate::posterior::density_scores(&rows.points, h)?;
        let prior = section.prior.build()?;
        let lik = posterior_likelihood(loaded)?.and_then(|m| m.log_likelihood);
        checks.equal("with_data", p.with_data, lik.is_some());
        let mut log_pi = Vec::with_capacity(rows.points.len());
        for (i, z) in rows.points.iter().enumerate() {
            let ll = match &lik {
                Some(f) => f(z)?,
                None => 0.0,
            };
            let lp = prior.log_score(z)? + ll;
            checks.close(&format!("rho row {i}"), rows.rho[i], rho[i], REPORT_TOL);
            checks.close(&format!("log_pi row {i}"), rows.log_pi[i], lp, REPORT_TOL);
            checks.close(&format!("log_omega row {i}"), rows.log_omega[i], lp - rho[i].ln(), REPORT_TOL);
            log_pi.push(lp);
        }
        let weighted = WeightedPointCloud {
            points: rows.points.clone(),
            log_omega: log_pi.iter().zip(&rho).map(|(lp, r)| lp - r.ln()).collect(),
            rho,
            log_pi,
            bandwidth: h,
        };
        let region = credible_region(&weighted, section.alpha)?;
        checks.equal("region_size", p.region_size, region.member_indices.len());
        let flags: Vec<bool> = (0..weighted.len()).map(|i| region.contains(i)).collect();
        checks.equal("in_region column", rows.in_region.clone(), flags);
        checks.close("cutoff_log_pi", p.cutoff_log_pi, region.cutoff_log_pi, REPORT_TOL);
        checks.vec_close("mean", &p.mean, posterior_mean(&weighted)?.as_slice(), REPORT_TOL);
        checks.equal("map index", p.map.index, map_estimate(&weighted)?.index);
        checks.equal("frechet index", p.frechet_mean.index, frechet_mean(&weighted)?.index);
    }

    println!("verify: {} checks passed, {} failed", checks.passed, checks.failures.len());
    for f in &checks.failures {
        println!("  FAIL {f}");
    }
    if checks.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::NoResult(format!("{} report values could not be reproduced", checks.failures.len())))
    }
}
