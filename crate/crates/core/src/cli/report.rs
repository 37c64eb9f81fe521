//! Run reports, written as JSON.

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::posterior::CloudPoint;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub model: String,
    pub seed: u64,
    pub timing_seconds: f64,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mle: Option<MleSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n_points: usize,
    pub attempts: usize,
    pub acceptance_rate: f64,
    pub mean_iterations: f64,
    pub max_residual: f64,
    pub convergence: Option<ConvergenceSummary>,
    pub smoothness: Option<SmoothnessSummary>,
}

/// Log-linear fits of the objective traces of accepted chains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub chains_fitted: usize,
    pub median_rate: f64,
    pub median_r_squared: f64,
    pub min_r_squared: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothnessSummary {
    pub sigma_min: f64,
    pub lambda0_hat: f64,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MleSummary {
    pub best_theta: Vec<f64>,
    pub best_value: f64,
    pub tangential_grad_norm: f64,
    pub outer_iters: usize,
    pub n_converged: usize,
    pub starts: Vec<StartSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: Vec<f64>,
    pub converged: bool,
    pub theta: Option<Vec<f64>>,
    pub value: Option<f64>,
    pub tangential_grad_norm: Option<f64>,
    pub outer_iters: Option<usize>,
    pub halved: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_points: usize,
    pub bandwidth: f64,
    pub alpha: f64,
    pub with_data: bool,
    pub mean: Vec<f64>,
    pub map: CloudPoint,
    pub frechet_mean: CloudPoint,
    pub region_size: usize,
    pub cutoff_log_pi: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn summarize_fits<'a, I>(traces: I) -> Option<ConvergenceSummary>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let fits: Vec<_> = traces
        .into_iter()
        .filter_map(|t| crate::descent::fit_convergence_rate(t).ok())
        .collect();
    if fits.is_empty() {
        return None;
    }
    let mut rates: Vec<f64> = fits.iter().map(|f| f.rate).collect();
    let mut r2: Vec<f64> = fits.iter().map(|f| f.r_squared).collect();
    let min_r_squared = r2.iter().copied().fold(f64::INFINITY, f64::min);
    Some(ConvergenceSummary {
        chains_fitted: fits.len(),
        median_rate: median(&mut rates),
        median_r_squared: median(&mut r2),
        min_r_squared,
    })
}
