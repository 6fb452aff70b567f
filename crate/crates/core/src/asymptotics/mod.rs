//! Effective market parameters and the asymptotic hedging-cost statistics.

mod params;
mod stats;
mod surfaces;

pub use params::{
    dbar_general, dbar_general_with, expou_alpha_beta, gammabar_general, gammabar_general_with, EffectiveParams,
    INNER_GH_ORDER,
};
pub use stats::{
    general_cost_stats, general_cost_terms, hw_stdev_surface, predicted_cost_stats, CostStats, GeneralCostTerms,
};
pub use surfaces::{cost_point, cost_surfaces, moment_functions, CostPoint, CostSurface, MomentFunctions};

use thiserror::Error;

use crate::mathkit::MathError;
use crate::pricer::PricerError;
use crate::volsim::VolsimError;

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Volsim(#[from] VolsimError),
    #[error(transparent)]
    Pricer(#[from] PricerError),
    #[error("quadrature failed at theta = {theta}, d_minus = {d_minus}: {source}")]
    Cell { theta: f64, d_minus: f64, source: MathError },
    #[error("{} surface cells failed: {}", .0.len(), .0.join("; "))]
    CellFailures(Vec<String>),
    #[error("beta squared is negative ({value:e}) at omega = {omega}")]
    NegativeBetaSquared { omega: f64, value: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("scheme {0} has no asymptotic prediction")]
    Unsupported(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
