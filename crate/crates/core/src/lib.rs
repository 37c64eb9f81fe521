//! Monte Carlo approximation of solution manifolds `{x : Ψ(x) = 0}` of
//! under-determined nonlinear systems, with manifold-constrained maximum
//! likelihood and weighted point-cloud posteriors on the manifold.

pub mod cli;
pub mod descent;
pub mod error;
pub mod generator;
pub mod geometry;
pub mod linalg;
pub mod mle;
pub mod models;
pub mod posterior;

pub use descent::{
    acceptance_rate, descend, fit_convergence_rate, sample_manifold, Backtracking, ConvergenceFit,
    DescentConfig, DescentResult, InitDistribution, PointCloud,
};
pub use error::{Error, Result};
pub use generator::{GeneratorSpec, JacobianMode, Matrix, Vector, WeightMatrix};
pub use geometry::{
    dist_to_cloud, estimate_smoothness, hausdorff, project_to_manifold, projected_hausdorff,
    CloudDistanceReport, SmoothnessReport,
};
pub use mle::{
    constrained_mle, multi_start_mle, tangential_gradient_norm, MleConfig, MleResult, ObjectiveSpec,
};
pub use models::ModelInstance;
pub use posterior::{
    credible_region, density_scores, frechet_mean, map_estimate, posterior_mean, posterior_weights,
    silverman_bandwidth, CredibleRegion, PriorSpec, WeightedPointCloud,
};
