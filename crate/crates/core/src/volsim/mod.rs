//! Kernels, covariances, factor samplers and correlated market paths.

pub mod io;
pub mod kernel;
pub mod market;
pub mod model;
pub mod sampler;

pub use kernel::{
    covariance_cz, kernel_eval, kernel_integral, kernel_l2_norm_sq, kernel_overlap, kernel_sq_integral,
    kernel_total_integral, KernelFn, KernelKind, KernelSpec,
};
pub use market::{simulate_market, MarketSimulator, PathBatch, PathSource};
pub use model::{GridSpec, VolMap, VolModel};
pub use sampler::{
    sample_factor_paths, CirculantSampler, FactorPaths, FactorSampler, SamplerChoice, SamplerMethod,
};

use thiserror::Error;

use crate::mathkit::MathError;

#[derive(Debug, Error)]
pub enum VolsimError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("FFT length for {0} points exceeds the supported size")]
    FftLength(usize),
    #[error("circulant embedding is not positive definite (min eigenvalue ratio {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed path file: {0}")]
    Format(String),
}

impl VolsimError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        VolsimError::Invalid(msg.into())
    }
}
