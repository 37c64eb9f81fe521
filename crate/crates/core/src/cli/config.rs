//! JSON run configuration and its translation into library objects.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::io::read_data_csv;
use super::CliError;
use crate::descent::{DescentConfig, InitDistribution};
use crate::error::Error;
use crate::generator::{Matrix, Vector, WeightMatrix};
use crate::mle::MleConfig;
use crate::models::fairness::{Fairness, FairnessTable};
use crate::models::gaussian_tail::{GaussianSample, GaussianTail};
use crate::models::kde::{self, Density, GaussianKde, StandardNormalDensity};
use crate::models::missing_data::{Cells, MissingData};
use crate::models::moments::{MomentFn, MomentModel};
use crate::models::ModelInstance;
use crate::posterior::{silverman_bandwidth, PriorSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub solver: DescentConfig,
    pub init: InitDistribution,
    pub n_chains: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weight_matrix: Option<WeightSpec>,
    #[serde(default)]
    pub outputs: OutputPaths,
    #[serde(default)]
    pub mle: Option<MleSection>,
    #[serde(default)]
    pub posterior: Option<PosteriorSection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub cloud_path: Option<PathBuf>,
    pub trace_path: Option<PathBuf>,
    pub plot_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    /// Coordinates shown in the scatter plot; defaults to the first two.
    pub plot_coords: Option<[usize; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    Identity,
    Diagonal(Vec<f64>),
    Dense(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleSection {
    pub ascent_step: f64,
    #[serde(default = "default_tangent_tol")]
    pub tangent_tol: f64,
    #[serde(default = "default_n_starts")]
    pub n_starts: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_bias_control")]
    pub bias_control: bool,
}

fn default_bias_control() -> bool {
    true
}

fn default_tangent_tol() -> f64 {
    1e-6
}

fn default_n_starts() -> usize {
    5
}

fn default_max_outer() -> usize {
    500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorSection {
    pub prior: PriorConfig,
    /// Observations for the likelihood; omit for a prior-only analysis.
    #[serde(default)]
    pub data: Option<DataSource>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub bandwidth: Bandwidth,
    /// Existing cloud CSV to weight instead of sampling a fresh one.
    #[serde(default)]
    pub cloud_path: Option<PathBuf>,
}

fn default_alpha() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    Flat,
    GaussianProduct { means: Vec<f64>, sds: Vec<f64> },
}

impl PriorConfig {
    pub fn build(&self) -> Result<PriorSpec, Error> {
        match self {
            PriorConfig::Flat => Ok(PriorSpec::flat()),
            PriorConfig::GaussianProduct { means, sds } => PriorSpec::gaussian_product(means.clone(), sds.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Fixed(f64),
    #[default]
    #[serde(with = "silverman_tag")]
    Silverman,
}

mod silverman_tag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("silverman")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "silverman" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("unknown bandwidth rule {s:?}")))
        }
    }
}

impl Bandwidth {
    pub fn resolve(&self, points: &[Vector]) -> Result<f64, Error> {
        match self {
            Bandwidth::Fixed(h) => Ok(*h),
            Bandwidth::Silverman => silverman_bandwidth(points),
        }
    }
}

/// Where observations come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// CSV file, one observation per row; relative to the config file.
    Csv(PathBuf),
    Inline(Vec<Vec<f64>>),
    /// IID `N(mean, sd²)` draws.
    Normal { n: usize, mean: f64, sd: f64, seed: u64 },
    /// Draws from a built-in Gaussian mixture.
    Mixture { preset: MixturePreset, n: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixturePreset {
    ThreeBlob,
    ElongatedPair,
}

impl DataSource {
    pub fn load(&self, base: &Path) -> Result<Vec<Vec<f64>>, CliError> {
        match self {
            DataSource::Csv(path) => read_data_csv(&base.join(path)),
            DataSource::Inline(rows) => Ok(rows.clone()),
            DataSource::Normal { n, mean, sd, seed } => {
                let dist = Normal::new(*mean, *sd).map_err(|e| CliError::Config(format!("normal data: {e}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..*n).map(|_| vec![dist.sample(&mut rng)]).collect())
            }
            DataSource::Mixture { preset, n, seed } => {
                let comps = match preset {
                    MixturePreset::ThreeBlob => kde::three_blob_mixture(),
                    MixturePreset::ElongatedPair => kde::elongated_pair(),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok(kde::sample_mixture(&comps, *n, &mut rng)?
                    .into_iter()
                    .map(|v| v.as_slice().to_vec())
                    .collect())
            }
        }
    }

    pub fn load_scalars(&self, base: &Path) -> Result<Vec<f64>, CliError> {
        self.load(base)?
            .into_iter()
            .map(|row| match row.as_slice() {
                [v] => Ok(*v),
                _ => Err(CliError::Config("expected one value per observation".into())),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    GaussianTail {
        r0: f64,
        r1: f64,
        s0: f64,
        #[serde(default)]
        data: Option<DataSource>,
    },
    /// Exactly one of `targets`, `counts` or `theta` (targets implied by a parameter).
    MissingData {
        #[serde(default)]
        targets: Option<Cells>,
        #[serde(default)]
        counts: Option<Cells>,
        #[serde(default)]
        theta: Option<Vec<f64>>,
    },
    Fairness { table: FairnessTable },
    Moment {
        dim: usize,
        conditions: Vec<MomentPreset>,
        data: DataSource,
    },
    KdeLevelSet {
        data: DataSource,
        #[serde(default)]
        bandwidth: Bandwidth,
        level: LevelSpec,
    },
    KdeRidge {
        data: DataSource,
        #[serde(default)]
        bandwidth: Bandwidth,
        k: usize,
    },
    StandardNormalLevelSet { dim: usize, level: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelSpec {
    Value(f64),
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentPreset {
    Mean { coord: usize },
    GaussianSecondMoment,
}

impl ModelConfig {
    /// Builds the model. `data_override` replaces the model's own data, if any.
    pub fn build(&self, base: &Path, data_override: Option<&DataSource>) -> Result<ModelInstance, CliError> {
        match self {
            ModelConfig::GaussianTail { r0, r1, s0, data } => {
                let model = GaussianTail::new(*r0, *r1, *s0)?;
                let sample = match data_override.or(data.as_ref()) {
                    Some(src) => Some(GaussianSample::new(&src.load_scalars(base)?)?),
                    None => None,
                };
                Ok(model.instance(sample))
            }
            ModelConfig::MissingData { targets, counts, theta } => {
                let model = match (targets, counts, theta) {
                    (Some(t), None, None) => MissingData::new(*t)?,
                    (None, Some(c), None) => MissingData::from_counts(*c)?,
                    (None, None, Some(th)) => MissingData::from_parameters(th)?,
                    _ => {
                        return Err(CliError::Config(
                            "missing_data needs exactly one of targets, counts, theta".into(),
                        ))
                    }
                };
                Ok(model.instance())
            }
            ModelConfig::Fairness { table } => Ok(Fairness::new(*table)?.instance()),
            ModelConfig::Moment { dim, conditions, data } => {
                let fns = conditions
                    .iter()
                    .map(|c| match c {
                        MomentPreset::Mean { coord } if coord < dim => Ok(MomentFn::mean(*dim, *coord)),
                        MomentPreset::Mean { coord } => {
                            Err(CliError::Config(format!("mean coordinate {coord} out of range")))
                        }
                        MomentPreset::GaussianSecondMoment if *dim == 2 => Ok(MomentFn::gaussian_second_moment()),
                        MomentPreset::GaussianSecondMoment => {
                            Err(CliError::Config("gaussian_second_moment needs dim = 2".into()))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let data = data_override.unwrap_or(data).load(base)?;
                Ok(MomentModel::new(*dim, fns, data)?.instance())
            }
            ModelConfig::KdeLevelSet { data, bandwidth, level } => {
                let kde = build_kde(base, data, bandwidth)?;
                let level = match level {
                    LevelSpec::Value(v) => *v,
                    LevelSpec::Quantile(q) => kde::level_from_quantile(&kde, *q)?,
                };
                let generator = kde::level_set_generator(std::sync::Arc::new(kde), level);
                Ok(ModelInstance::new("kde_level_set", generator))
            }
            ModelConfig::KdeRidge { data, bandwidth, k } => {
                let kde = build_kde(base, data, bandwidth)?;
                Ok(ModelInstance::new("kde_ridge", kde::ridge_generator(std::sync::Arc::new(kde), *k)?))
            }
            ModelConfig::StandardNormalLevelSet { dim, level } => {
                if *dim == 0 {
                    return Err(CliError::Config("dim must be positive".into()));
                }
                let density: std::sync::Arc<dyn Density> = std::sync::Arc::new(StandardNormalDensity { dim: *dim });
                Ok(ModelInstance::new(
                    "standard_normal_level_set",
                    kde::level_set_generator(density, *level),
                ))
            }
        }
    }
}

fn build_kde(base: &Path, data: &DataSource, bandwidth: &Bandwidth) -> Result<GaussianKde, CliError> {
    let points: Vec<Vector> = data
        .load(base)?
        .into_iter()
        .map(|row| DVector::from_vec(row))
        .collect();
    let h = bandwidth.resolve(&points)?;
    Ok(GaussianKde::new(points, h)?)
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn weight_matrix(&self, codim: usize) -> Result<WeightMatrix, CliError> {
        let w = match &self.weight_matrix {
            None | Some(WeightSpec::Identity) => WeightMatrix::identity(codim),
            Some(WeightSpec::Diagonal(d)) => WeightMatrix::diagonal(d)?,
            Some(WeightSpec::Dense(rows)) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(CliError::Config("weight matrix must be square".into()));
                }
                WeightMatrix::new(Matrix::from_fn(n, n, |i, j| rows[i][j]))?
            }
        };
        if w.codim() != codim {
            return Err(CliError::Config(format!(
                "weight matrix is {0}x{0}, model has {codim} equations",
                w.codim()
            )));
        }
        Ok(w)
    }

    /// Structural checks that do not need the model.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_chains == 0 {
            return Err(CliError::Config("n_chains must be at least 1".into()));
        }
        self.solver.validate()?;
        if let Some(mle) = &self.mle {
            self.mle_config(mle).validate()?;
            if mle.n_starts == 0 {
                return Err(CliError::Config("mle.n_starts must be at least 1".into()));
            }
        }
        if let Some(p) = &self.posterior {
            if !(p.alpha > 0.0 && p.alpha < 1.0) {
                return Err(CliError::Config(format!("posterior.alpha must lie in (0,1), got {}", p.alpha)));
            }
            if let Bandwidth::Fixed(h) = p.bandwidth {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(CliError::Config(format!("bandwidth must be positive, got {h}")));
                }
            }
            p.prior.build()?;
        }
        Ok(())
    }

    pub fn mle_config(&self, mle: &MleSection) -> MleConfig {
        MleConfig {
            ascent_step: mle.ascent_step,
            descent: self.solver,
            tangent_tol: mle.tangent_tol,
            max_outer: mle.max_outer,
            bias_control: mle.bias_control,
        }
    }
}
