//! Special functions, quadrature and random streams used by every other module.

pub mod quad;
pub mod rng;
pub mod special;

pub use quad::{
    integrate_1d, integrate_1d_with_error, integrate_gauss_2d, BivariateGaussian, Decay, Domain,
    EndpointMap, GaussHermite, GaussLegendre, QuadResult, QuadScheme, QuadSpec,
};
pub use rng::{rng_stream, stream_rng, NormalStream};
pub use special::{
    exp_integral_e1, exp_integral_ei, exp_integral_ein_plus, gamma, normal_cdf, normal_inv_cdf,
    normal_pdf, EULER_GAMMA,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("{function}: argument {value} outside the domain")]
    Domain { function: &'static str, value: f64 },
    #[error("{function}: iteration did not converge")]
    NoConvergence { function: &'static str },
    #[error("quadrature did not converge: estimate {estimate}, error bound {error_bound}")]
    QuadNonConvergence { estimate: f64, error_bound: f64 },
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
}
