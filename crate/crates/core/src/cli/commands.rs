//! `sample`, `mle` and `posterior`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

use super::config::RunConfig;
use super::io;
use super::report::{summarize_fits, MleSummary, PosteriorSummary, RunReport, SampleSummary, SmoothnessSummary, StartSummary};
use super::svg::{self, Layer, Marker};
use super::{CliError, Loaded};
use crate::descent::{cloud_from_outcomes, run_chains, ChainOutcome, PointCloud};
use crate::error::Error;
use crate::geometry::smoothness_of_points;
use crate::mle::multi_start_mle;
use crate::models::ModelInstance;
use crate::posterior::{credible_region, frechet_mean, map_estimate, posterior_mean, posterior_weights};

/// Accepted cloud plus the outcomes behind it.
pub struct SampleRun {
    pub cloud: PointCloud,
    pub outcomes: Vec<ChainOutcome>,
}

/// Batches of `n_chains` chains with consecutive chain indices until
/// `min_points` are accepted or `max_attempts` chains have run.
pub fn sample_with_retry(
    loaded: &Loaded,
    model: &ModelInstance,
    min_points: usize,
    max_attempts: usize,
) -> Result<SampleRun, CliError> {
    let cfg = &loaded.config;
    let g = &model.generator;
    cfg.init.validate(g.dim())?;
    let lam = cfg.weight_matrix(g.codim())?;
    let accepted = |o: &[ChainOutcome]| o.iter().filter(|c| c.accepted().is_some()).count();
    let first = cfg.n_chains.min(max_attempts.max(1));
    let mut outcomes = run_chains(g, &lam, &cfg.init, 0, first, &cfg.solver, cfg.seed);
    while accepted(&outcomes) < min_points && outcomes.len() < max_attempts {
        let batch = cfg.n_chains.min(max_attempts - outcomes.len());
        info!(
            "{} of {min_points} points after {} chains; launching {batch} more",
            accepted(&outcomes),
            outcomes.len()
        );
        let more = run_chains(g, &lam, &cfg.init, outcomes.len(), batch, &cfg.solver, cfg.seed);
        outcomes.extend(more);
    }
    let cloud = cloud_from_outcomes(&outcomes, cfg.seed)?;
    if cloud.len() < min_points {
        warn!("only {} of {min_points} requested points accepted", cloud.len());
    }
    info!("accepted {} of {} chains", cloud.len(), cloud.attempts);
    Ok(SampleRun { cloud, outcomes })
}

fn retry_limits(loaded: &Loaded) -> (usize, usize) {
    let min_points = loaded.args.min_points.unwrap_or(1);
    let max_attempts = loaded
        .args
        .max_attempts
        .unwrap_or_else(|| loaded.config.n_chains.max(10 * min_points));
    (min_points, max_attempts)
}

fn plot_coords(cfg: &RunConfig, dim: usize) -> Result<[usize; 2], CliError> {
    let coords = cfg.outputs.plot_coords.unwrap_or([0, 1.min(dim - 1)]);
    if coords.iter().any(|c| *c >= dim) {
        return Err(CliError::Config(format!("plot_coords {coords:?} out of range for dimension {dim}")));
    }
    Ok(coords)
}

fn build_model(loaded: &Loaded) -> Result<ModelInstance, CliError> {
    loaded.config.model.build(&loaded.base, None)
}

fn report(loaded: &Loaded, command: &str, model: &ModelInstance, started: Instant) -> RunReport {
    RunReport {
        command: command.to_string(),
        model: model.name.clone(),
        seed: loaded.config.seed,
        timing_seconds: started.elapsed().as_secs_f64(),
        config: loaded.config.clone(),
        sample: None,
        mle: None,
        posterior: None,
    }
}

fn write_report(loaded: &Loaded, report: &RunReport) -> Result<(), CliError> {
    match loaded.output(&loaded.config.outputs.report_path) {
        Some(path) => io::write_json(&path, report),
        None => {
            let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

pub fn sample_summary(model: &ModelInstance, run: &SampleRun) -> SampleSummary {
    let cloud = &run.cloud;
    let traces = run.outcomes.iter().filter_map(|o| o.accepted()).map(|r| r.trace.as_slice());
    let smoothness = match smoothness_of_points(&model.generator, &cloud.points) {
        Ok(s) => Some(SmoothnessSummary {
            sigma_min: s.sigma_min,
            lambda0_hat: s.lambda0_hat,
            rank_deficient: s.rank_deficient,
        }),
        Err(e) => {
            warn!("smoothness diagnostics unavailable: {e}");
            None
        }
    };
    SampleSummary {
        n_points: cloud.len(),
        attempts: cloud.attempts,
        acceptance_rate: crate::descent::acceptance_rate(cloud),
        mean_iterations: cloud.iterations.iter().sum::<usize>() as f64 / cloud.len() as f64,
        max_residual: cloud.residuals.iter().copied().fold(0.0, f64::max),
        convergence: summarize_fits(traces),
        smoothness,
    }
}

pub fn cmd_sample(loaded: &Loaded) -> Result<(), CliError> {
    let started = Instant::now();
    let model = build_model(loaded)?;
    let (min_points, max_attempts) = retry_limits(loaded);
    let run = sample_with_retry(loaded, &model, min_points, max_attempts)?;
    let outputs = &loaded.config.outputs;
    if let Some(path) = loaded.output(&outputs.cloud_path) {
        io::write_cloud(&path, &run.cloud)?;
    }
    if let Some(path) = loaded.output(&outputs.trace_path) {
        let traces = run
            .outcomes
            .iter()
            .filter_map(|o| o.accepted().map(|r| (o.index, r.trace.as_slice())));
        io::write_traces(&path, traces)?;
    }
    if let Some(path) = loaded.output(&outputs.plot_path) {
        let coords = plot_coords(&loaded.config, model.generator.dim())?;
        let svg = svg::scatter(
            &format!("{}: {} points", model.name, run.cloud.len()),
            coords,
            &[Layer {
                points: run.cloud.points.iter().collect(),
                color: "#1f4e9c",
                marker: Marker::Dot,
                label: "accepted limits",
            }],
        );
        io::write_text(&path, &svg)?;
    }
    let mut rep = report(loaded, "sample", &model, started);
    rep.sample = Some(sample_summary(&model, &run));
    rep.timing_seconds = started.elapsed().as_secs_f64();
    write_report(loaded, &rep)
}

/// `dir/stem_start{i}.ext` next to the configured trace path.
pub fn trajectory_path(trace: &Path, start: usize) -> PathBuf {
    let stem = trace.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    let ext = trace.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    trace.with_file_name(format!("{stem}_start{start}.{ext}"))
}

pub fn cmd_mle(loaded: &Loaded) -> Result<(), CliError> {
    let started = Instant::now();
    let cfg = &loaded.config;
    let section = cfg
        .mle
        .as_ref()
        .ok_or_else(|| CliError::Config("mle section missing".into()))?;
    let model = build_model(loaded)?;
    let objective = model
        .objective
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("model {} has no objective (likelihood data missing?)", model.name)))?;
    let g = &model.generator;
    let lam = cfg.weight_matrix(g.codim())?;
    let mle_cfg = cfg.mle_config(section);
    let result = multi_start_mle(g, &lam, objective, &cfg.init, section.n_starts, &mle_cfg, cfg.seed);
    let result = match result {
        Err(Error::NoConvergedRuns(n)) => return Err(CliError::NoResult(format!("none of {n} starts converged"))),
        other => other?,
    };
    let starts: Vec<StartSummary> = result
        .starts
        .iter()
        .zip(&result.all)
        .map(|(s, r)| match r {
            Ok(m) => StartSummary {
                start: s.as_slice().to_vec(),
                converged: m.converged,
                theta: Some(m.theta.as_slice().to_vec()),
                value: Some(m.value),
                tangential_grad_norm: Some(m.tangential_grad_norm),
                outer_iters: Some(m.outer_iters),
                halved: Some(m.halved),
                error: None,
            },
            Err(e) => StartSummary {
                start: s.as_slice().to_vec(),
                converged: false,
                theta: None,
                value: None,
                tangential_grad_norm: None,
                outer_iters: None,
                halved: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    if let Some(trace) = loaded.output(&cfg.outputs.trace_path) {
        for (i, r) in result.all.iter().enumerate() {
            if let Ok(m) = r {
                write_trajectory(&trajectory_path(&trace, i), m)?;
            }
        }
    }
    if let Some(path) = loaded.output(&cfg.outputs.plot_path) {
        let coords = plot_coords(cfg, g.dim())?;
        let paths: Vec<crate::generator::Vector> = result
            .all
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .flat_map(|m| m.trajectory.iter().map(|p| nalgebra::DVector::from_vec(p.theta.clone())))
            .collect();
        let svg = svg::scatter(
            &format!("{}: constrained maximum", model.name),
            coords,
            &[
                Layer {
                    points: result.starts.iter().collect(),
                    color: "#1f4e9c",
                    marker: Marker::Diamond,
                    label: "starts",
                },
                Layer {
                    points: paths.iter().collect(),
                    color: "#6b8fc7",
                    marker: Marker::Dot,
                    label: "iterates",
                },
                Layer {
                    points: vec![&result.best.theta],
                    color: "#e07b00",
                    marker: Marker::Cross,
                    label: "maximum",
                },
            ],
        );
        io::write_text(&path, &svg)?;
    }
    let best = &result.best;
    let mut rep = report(loaded, "mle", &model, started);
    rep.mle = Some(MleSummary {
        best_theta: best.theta.as_slice().to_vec(),
        best_value: best.value,
        tangential_grad_norm: best.tangential_grad_norm,
        outer_iters: best.outer_iters,
        n_converged: starts.iter().filter(|s| s.converged).count(),
        starts,
    });
    rep.timing_seconds = started.elapsed().as_secs_f64();
    write_report(loaded, &rep)
}

fn write_trajectory(path: &Path, m: &crate::mle::MleResult) -> Result<(), CliError> {
    let d = m.theta.len();
    let mut text = String::from("step,");
    for j in 0..d {
        text.push_str(&format!("x{j},"));
    }
    text.push_str("value\n");
    for (t, p) in m.trajectory.iter().enumerate() {
        text.push_str(&t.to_string());
        for v in &p.theta {
            text.push(',');
            text.push_str(&io::fmt_float(*v));
        }
        text.push(',');
        text.push_str(&io::fmt_float(p.value));
        text.push('\n');
    }
    io::write_text(path, &text)
}

/// Log-likelihood used for posterior scoring; `None` for prior-only runs.
pub fn posterior_likelihood(loaded: &Loaded) -> Result<Option<ModelInstance>, CliError> {
    let section = loaded
        .config
        .posterior
        .as_ref()
        .ok_or_else(|| CliError::Config("posterior section missing".into()))?;
    match &section.data {
        None => Ok(None),
        Some(src) => {
            let model = loaded.config.model.build(&loaded.base, Some(src))?;
            if model.log_likelihood.is_none() {
                return Err(CliError::Config(format!("model {} has no likelihood", model.name)));
            }
            Ok(Some(model))
        }
    }
}

pub fn cmd_posterior(loaded: &Loaded) -> Result<(), CliError> {
    let started = Instant::now();
    let cfg = &loaded.config;
    let section = cfg
        .posterior
        .as_ref()
        .ok_or_else(|| CliError::Config("posterior section missing".into()))?;
    let model = build_model(loaded)?;
    let points = match &section.cloud_path {
        Some(p) => io::read_cloud(&loaded.path(p))?.points,
        None => {
            let (min_points, max_attempts) = retry_limits(loaded);
            sample_with_retry(loaded, &model, min_points, max_attempts)?.cloud.points
        }
    };
    if let Some(p) = points.iter().find(|p| p.len() != model.generator.dim()) {
        return Err(CliError::Config(format!(
            "cloud has dimension {}, model has {}",
            p.len(),
            model.generator.dim()
        )));
    }
    let prior = section.prior.build()?;
    let h = section.bandwidth.resolve(&points)?;
    let lik_model = posterior_likelihood(loaded)?;
    let weighted = match lik_model.as_ref().and_then(|m| m.log_likelihood.clone()) {
        Some(ll) => posterior_weights(&points, &prior, |z: &crate::generator::Vector| ll(z), h)?,
        None => posterior_weights(&points, &prior, |_: &crate::generator::Vector| Ok(0.0), h)?,
    };
    let region = credible_region(&weighted, section.alpha)?;
    let mean = posterior_mean(&weighted)?;
    let map = map_estimate(&weighted)?;
    let frechet = frechet_mean(&weighted)?;
    if let Some(path) = loaded.output(&cfg.outputs.cloud_path) {
        io::write_weighted(&path, &weighted, &region)?;
    }
    if let Some(path) = loaded.output(&cfg.outputs.plot_path) {
        let coords = plot_coords(cfg, model.generator.dim())?;
        let outside: Vec<_> = (0..weighted.len()).filter(|i| !region.contains(*i)).map(|i| &weighted.points[i]).collect();
        let inside: Vec<_> = region.member_indices.iter().map(|i| &weighted.points[*i]).collect();
        let map_v = &weighted.points[map.index];
        let fre_v = &weighted.points[frechet.index];
        let title = format!("{:.0}% credible region, {} of {} points", 100.0 * (1.0 - section.alpha), inside.len(), weighted.len());
        let svg = svg::scatter(
            &title,
            coords,
            &[
                Layer {
                    points: outside,
                    color: "#b0b0b0",
                    marker: Marker::Dot,
                    label: "manifold sample",
                },
                Layer {
                    points: inside,
                    color: "#2a7fd4",
                    marker: Marker::Dot,
                    label: "credible region",
                },
                Layer {
                    points: vec![map_v],
                    color: "#d62728",
                    marker: Marker::Cross,
                    label: "MAP",
                },
                Layer {
                    points: vec![fre_v],
                    color: "#2ca02c",
                    marker: Marker::Diamond,
                    label: "Frechet mean",
                },
            ],
        );
        io::write_text(&path, &svg)?;
    }
    let mut rep = report(loaded, "posterior", &model, started);
    rep.posterior = Some(PosteriorSummary {
        n_points: weighted.len(),
        bandwidth: h,
        alpha: section.alpha,
        with_data: lik_model.is_some(),
        mean: mean.as_slice().to_vec(),
        map,
        frechet_mean: frechet,
        region_size: region.member_indices.len(),
        cutoff_log_pi: region.cutoff_log_pi,
    });
    rep.timing_seconds = started.elapsed().as_secs_f64();
    write_report(loaded, &rep)
}
