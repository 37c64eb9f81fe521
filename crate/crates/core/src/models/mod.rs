//! Built-in statistical models, each exposing its constraint system.

pub mod fairness;
pub mod gaussian_tail;
pub mod kde;
pub mod missing_data;
pub mod moments;
pub mod normal;

use std::fmt;
use std::sync::Arc;

use crate::error::Result;
use crate::generator::{GeneratorSpec, Vector};
use crate::mle::ObjectiveSpec;

pub use fairness::{Fairness, FairnessTable};
pub use gaussian_tail::{GaussianSample, GaussianTail};
pub use kde::{kde_model, level_from_quantile, GaussianKde, KdeMode, StandardNormalDensity};
pub use missing_data::{Cells, MissingData};
pub use moments::{MomentFn, MomentModel};

pub type LogLikelihoodFn = dyn Fn(&Vector) -> Result<f64> + Send + Sync;

/// A named model: its generator plus whatever auxiliary functions it has.
#[derive(Clone)]
pub struct ModelInstance {
    pub name: String,
    pub generator: GeneratorSpec,
    /// Objective to maximize on the manifold (mean log-likelihood or negated risk).
    pub objective: Option<ObjectiveSpec>,
    /// Full-sample log-likelihood `Σ_i log p(X_i | θ)`, for posterior scoring.
    pub log_likelihood: Option<Arc<LogLikelihoodFn>>,
}

impl fmt::Debug for ModelInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelInstance")
            .field("name", &self.name)
            .field("generator", &self.generator)
            .field("objective", &self.objective.is_some())
            .field("log_likelihood", &self.log_likelihood.is_some())
            .finish()
    }
}

impl ModelInstance {
    pub fn new(name: &str, generator: GeneratorSpec) -> Self {
        Self {
            name: name.to_string(),
            generator,
            objective: None,
            log_likelihood: None,
        }
    }
}

pub fn gaussian_tail(r0: f64, r1: f64, s0: f64) -> Result<ModelInstance> {
    Ok(GaussianTail::new(r0, r1, s0)?.instance(None))
}

pub fn missing_data(targets: Cells) -> Result<ModelInstance> {
    Ok(MissingData::new(targets)?.instance())
}

pub fn missing_data_from_counts(counts: Cells) -> Result<ModelInstance> {
    Ok(MissingData::from_counts(counts)?.instance())
}

pub fn fairness(table: FairnessTable) -> Result<ModelInstance> {
    Ok(Fairness::new(table)?.instance())
}

pub fn moment_model(dim: usize, moment_fns: Vec<MomentFn>, data: Vec<Vec<f64>>) -> Result<ModelInstance> {
    Ok(MomentModel::new(dim, moment_fns, data)?.instance())
}
