//! Black-Scholes prices, the `(x∂ₓ)^j (x²∂ₓ²)` Greek ladder, the corrected
//! price and implied volatility. Zero interest rate throughout.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mathkit::{normal_cdf, normal_pdf, GaussHermite, MathError};

/// Below this remaining total variance the Greeks are reported as an error.
pub const TAU_FLOOR: f64 = 1e-12;
const CUSTOM_GH_ORDER: usize = 64;
const IV_LOW: f64 = 1e-6;
const IV_HIGH: f64 = 5.0;
const IV_MAX_ITER: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricerError {
    #[error("{what} = {value} is outside the domain")]
    Domain { what: &'static str, value: f64 },
    #[error("remaining variance {tau:e} below the floor {TAU_FLOOR:e}")]
    TauTooSmall { tau: f64 },
    #[error("target price {target} outside the no-arbitrage band ({lower}, {upper})")]
    OutOfBand { target: f64, lower: f64, upper: f64 },
    #[error("implied volatility did not converge; bracket [{lo}, {hi}]")]
    NoConvergence { lo: f64, hi: f64 },
    #[error("invalid option: {0}")]
    Invalid(String),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Payoff sampled on a log-moneyness grid `y = ln(x/K)`, linearly
/// interpolated in `y` inside the grid and linearly extrapolated in `x`
/// outside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledPayoff {
    pub log_moneyness: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledPayoff {
    pub fn validate(&self) -> Result<(), PricerError> {
        if self.log_moneyness.len() < 2 || self.log_moneyness.len() != self.values.len() {
            return Err(PricerError::Invalid(
                "custom payoff needs at least two (log_moneyness, value) pairs of equal length".into(),
            ));
        }
        if self.log_moneyness.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PricerError::Invalid("log_moneyness must be strictly increasing".into()));
        }
        if self.values.iter().chain(&self.log_moneyness).any(|v| !v.is_finite()) {
            return Err(PricerError::Invalid("custom payoff has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, strike: f64) -> f64 {
        let ys = &self.log_moneyness;
        let hs = &self.values;
        let n = ys.len();
        let y = (x / strike).ln();
        if y <= ys[0] || y >= ys[n - 1] {
            let (i, j) = if y <= ys[0] { (0, 1) } else { (n - 2, n - 1) };
            let (xi, xj) = (strike * ys[i].exp(), strike * ys[j].exp());
            let slope = (hs[j] - hs[i]) / (xj - xi);
            let anchor = if y <= ys[0] { i } else { j };
            return hs[anchor] + slope * (x - strike * ys[anchor].exp());
        }
        let k = ys.partition_point(|v| *v <= y).clamp(1, n - 1);
        let w = (y - ys[k - 1]) / (ys[k] - ys[k - 1]);
        hs[k - 1] * (1.0 - w) + hs[k] * w
    }

    /// Convex in `x` and not affine, on the sampled points.
    pub fn is_convex_non_affine(&self, strike: f64) -> bool {
        let xs: Vec<f64> = self.log_moneyness.iter().map(|y| strike * y.exp()).collect();
        let slopes: Vec<f64> = xs
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, h)| (h[1] - h[0]) / (x[1] - x[0]))
            .collect();
        let tol = 1e-12 * slopes.iter().fold(1.0f64, |m, s| m.max(s.abs()));
        let convex = slopes.windows(2).all(|s| s[1] >= s[0] - tol);
        let strict = slopes.windows(2).any(|s| s[1] > s[0] + tol);
        convex && strict
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Payoff {
    Call,
    Put,
    Custom(SampledPayoff),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSpec {
    pub payoff: Payoff,
    pub strike: f64,
    pub maturity: f64,
}

impl OptionSpec {
    pub fn call(strike: f64, maturity: f64) -> Self {
        Self { payoff: Payoff::Call, strike, maturity }
    }

    pub fn put(strike: f64, maturity: f64) -> Self {
        Self { payoff: Payoff::Put, strike, maturity }
    }

    pub fn validate(&self) -> Result<(), PricerError> {
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(PricerError::Domain { what: "strike", value: self.strike });
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(PricerError::Domain { what: "maturity", value: self.maturity });
        }
        if let Payoff::Custom(p) = &self.payoff {
            p.validate()?;
        }
        Ok(())
    }

    pub fn payoff(&self, x: f64) -> f64 {
        let k = self.strike;
        match &self.payoff {
            Payoff::Call => (x - k).max(0.0),
            Payoff::Put => (k - x).max(0.0),
            Payoff::Custom(p) => p.eval(x, k),
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self.payoff, Payoff::Custom(_))
    }
}

/// Effective market parameters `(σ̄, D, Γ)` and, when known, their raw parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub sigma_bar: f64,
    pub d_param: f64,
    pub gamma_param: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_bar: Option<f64>,
}

impl MarketParams {
    pub fn effective(sigma_bar: f64, d_param: f64, gamma_param: f64) -> Self {
        Self {
            sigma_bar,
            d_param,
            gamma_param,
            epsilon: None,
            rho: None,
            d_bar: None,
            gamma_bar: None,
        }
    }

    /// `D = √ε ρ D̄`, `Γ = √ε Γ̄`.
    pub fn from_raw(sigma_bar: f64, epsilon: f64, rho: f64, d_bar: f64, gamma_bar: f64) -> Self {
        let se = epsilon.sqrt();
        Self {
            sigma_bar,
            d_param: se * rho * d_bar,
            gamma_param: se * gamma_bar,
            epsilon: Some(epsilon),
            rho: Some(rho),
            d_bar: Some(d_bar),
            gamma_bar: Some(gamma_bar),
        }
    }

    /// Black-Scholes market: no correction.
    pub fn black_scholes(sigma_bar: f64) -> Self {
        Self::effective(sigma_bar, 0.0, 0.0)
    }

    /// `D/(σ̄Γ)`, or zero when `Γ = 0`.
    pub fn rho_bar(&self) -> f64 {
        if self.gamma_param > 0.0 {
            self.d_param / (self.sigma_bar * self.gamma_param)
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), PricerError> {
        if !(self.sigma_bar > 0.0 && self.sigma_bar.is_finite()) {
            return Err(PricerError::Domain { what: "sigma_bar", value: self.sigma_bar });
        }
        if !(self.gamma_param >= 0.0) || !self.d_param.is_finite() {
            return Err(PricerError::Invalid("need Γ ≥ 0 and finite D".into()));
        }
        if self.gamma_param > 0.0 && self.rho_bar().abs() > 1.0 + 1e-12 {
            return Err(PricerError::Invalid(format!("|D/(σ̄Γ)| = {} exceeds 1", self.rho_bar().abs())));
        }
        if let (Some(e), Some(r), Some(db)) = (self.epsilon, self.rho, self.d_bar) {
            let d = e.sqrt() * r * db;
            if (d - self.d_param).abs() > 1e-12 * d.abs().max(1e-300) {
                return Err(PricerError::Invalid("d_param differs from √ε·ρ·D̄".into()));
            }
        }
        Ok(())
    }
}

/// Black-Scholes coordinates at `σ̄`: `τ = σ̄²(T − t)`, `d± = ln(x/K)/√τ ± √τ/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BsPoint {
    pub t: f64,
    pub x: f64,
    pub tau: f64,
    pub d_minus: f64,
    pub d_plus: f64,
}

impl BsPoint {
    pub fn new(opt: &OptionSpec, sigma: f64, t: f64, x: f64) -> Result<Self, PricerError> {
        check_inputs(opt, t, x, sigma)?;
        let tau = sigma * sigma * (opt.maturity - t);
        if tau < TAU_FLOOR {
            return Err(PricerError::TauTooSmall { tau });
        }
        let sq = tau.sqrt();
        let d_minus = (x / opt.strike).ln() / sq - 0.5 * sq;
        Ok(Self { t, x, tau, d_minus, d_plus: d_minus + sq })
    }
}

fn check_inputs(opt: &OptionSpec, t: f64, x: f64, sigma: f64) -> Result<(), PricerError> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(PricerError::Domain { what: "x", value: x });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(PricerError::Domain { what: "sigma", value: sigma });
    }
    if !(t >= 0.0 && t <= opt.maturity) {
        return Err(PricerError::Domain { what: "t", value: t });
    }
    Ok(())
}

/// Gaussian expectations of a custom payoff in log-space:
/// `∂_y^k E[h(e^{y + sZ - s²/2})] = E[h(·) He_k(Z)] / s^k`.
fn custom_log_derivatives(p: &SampledPayoff, strike: f64, x: f64, s: f64, upto: usize) -> [f64; 5] {
    let rule = GaussHermite::new(CUSTOM_GH_ORDER);
    let mut out = [0.0; 5];
    for (z, w) in rule.nodes().iter().zip(rule.weights()) {
        let h = p.eval(x * (s * z - 0.5 * s * s).exp(), strike);
        // probabilists' Hermite polynomials
        let mut he = [1.0, *z, 0.0, 0.0, 0.0];
        for k in 2..5 {
            he[k] = z * he[k - 1] - (k - 1) as f64 * he[k - 2];
        }
        for k in 0..=upto.min(4) {
            out[k] += w * h * he[k];
        }
    }
    for (k, v) in out.iter_mut().enumerate() {
        *v /= s.powi(k as i32);
    }
    out
}

/// `Q⁽⁰⁾(t, x; σ)`.
pub fn bs_price(opt: &OptionSpec, t: f64, x: f64, sigma: f64) -> Result<f64, PricerError> {
    check_inputs(opt, t, x, sigma)?;
    let k = opt.strike;
    let rem = opt.maturity - t;
    let sd = sigma * rem.sqrt();
    if sd * sd < TAU_FLOOR {
        return Ok(opt.payoff(x));
    }
    let d_minus = (x / k).ln() / sd - 0.5 * sd;
    let d_plus = d_minus + sd;
    Ok(match &opt.payoff {
        Payoff::Call => (x * normal_cdf(d_plus) - k * normal_cdf(d_minus)).max((x - k).max(0.0)),
        Payoff::Put => (k * normal_cdf(-d_minus) - x * normal_cdf(-d_plus)).max((k - x).max(0.0)),
        Payoff::Custom(p) => custom_log_derivatives(p, k, x, sd, 0)[0],
    })
}

/// `∂ₓQ⁽⁰⁾(t, x; σ)`.
pub fn bs_delta(opt: &OptionSpec, t: f64, x: f64, sigma: f64) -> Result<f64, PricerError> {
    check_inputs(opt, t, x, sigma)?;
    let sd = sigma * (opt.maturity - t).sqrt();
    if sd * sd < TAU_FLOOR {
        return Err(PricerError::TauTooSmall { tau: sd * sd });
    }
    let d_plus = (x / opt.strike).ln() / sd + 0.5 * sd;
    Ok(match &opt.payoff {
        Payoff::Call => normal_cdf(d_plus),
        Payoff::Put => normal_cdf(d_plus) - 1.0,
        Payoff::Custom(p) => custom_log_derivatives(p, opt.strike, x, sd, 1)[1] / x,
    })
}

/// `∂_σ Q⁽⁰⁾(t, x; σ)`.
pub fn bs_vega(opt: &OptionSpec, t: f64, x: f64, sigma: f64) -> Result<f64, PricerError> {
    check_inputs(opt, t, x, sigma)?;
    let rem = opt.maturity - t;
    let sd = sigma * rem.sqrt();
    if sd * sd < TAU_FLOOR {
        return Err(PricerError::TauTooSmall { tau: sd * sd });
    }
    match &opt.payoff {
        Payoff::Call | Payoff::Put => {
            let d_minus = (x / opt.strike).ln() / sd - 0.5 * sd;
            Ok(opt.strike * normal_pdf(d_minus) * rem.sqrt())
        }
        // ∂_σ Q = σ(T−t)·x²∂ₓ²Q
        Payoff::Custom(p) => {
            let d = custom_log_derivatives(p, opt.strike, x, sd, 2);
            Ok(sigma * rem * (d[2] - d[1]))
        }
    }
}

/// `(x∂ₓ)^j (x²∂ₓ²) Q⁽⁰⁾` at `σ` for `j ∈ {0, 1, 2}`.
pub fn greek_ladder(opt: &OptionSpec, point: &BsPoint, order: u8) -> Result<f64, PricerError> {
    if point.tau < TAU_FLOOR {
        return Err(PricerError::TauTooSmall { tau: point.tau });
    }
    if order > 2 {
        return Err(PricerError::Domain { what: "ladder order", value: order as f64 });
    }
    let k = opt.strike;
    let tau = point.tau;
    let d = point.d_minus;
    let g = (-0.5 * d * d).exp() / (2.0 * PI).sqrt();
    match &opt.payoff {
        Payoff::Call | Payoff::Put => Ok(match order {
            0 => k * g / tau.sqrt(),
            1 => -k * d * g / tau,
            _ => k * (d * d - 1.0) * g / tau.powf(1.5),
        }),
        Payoff::Custom(p) => {
            // x∂ₓ = ∂_y and x²∂ₓ² = ∂_y² − ∂_y
            let u = custom_log_derivatives(p, k, point.x, tau.sqrt(), 2 + order as usize);
            let j = order as usize;
            Ok(u[j + 2] - u[j + 1])
        }
    }
}

/// `P = Q⁽⁰⁾(σ̄) + D (T − t) (x∂ₓ)(x²∂ₓ²) Q⁽⁰⁾`.
pub fn corrected_price(opt: &OptionSpec, mp: &MarketParams, t: f64, x: f64) -> Result<f64, PricerError> {
    let q0 = bs_price(opt, t, x, mp.sigma_bar)?;
    let rem = opt.maturity - t;
    if mp.d_param == 0.0 || mp.sigma_bar * mp.sigma_bar * rem < TAU_FLOOR {
        return Ok(q0);
    }
    let point = BsPoint::new(opt, mp.sigma_bar, t, x)?;
    Ok(q0 + mp.d_param * rem * greek_ladder(opt, &point, 1)?)
}

/// `∂ₓP`.
pub fn corrected_delta(opt: &OptionSpec, mp: &MarketParams, t: f64, x: f64) -> Result<f64, PricerError> {
    let delta = bs_delta(opt, t, x, mp.sigma_bar)?;
    if mp.d_param == 0.0 {
        return Ok(delta);
    }
    let point = BsPoint::new(opt, mp.sigma_bar, t, x)?;
    Ok(delta + mp.d_param * (opt.maturity - t) * greek_ladder(opt, &point, 2)? / x)
}

fn price_band(opt: &OptionSpec, x: f64) -> (f64, f64) {
    let k = opt.strike;
    match &opt.payoff {
        Payoff::Call => ((x - k).max(0.0), x),
        Payoff::Put => ((k - x).max(0.0), k),
        Payoff::Custom(_) => (f64::NAN, f64::NAN),
    }
}

/// Volatility `σ` with `Q⁽⁰⁾(t, x; σ) = target`.
pub fn implied_vol(opt: &OptionSpec, t: f64, x: f64, target: f64) -> Result<f64, PricerError> {
    check_inputs(opt, t, x, 1.0)?;
    if opt.maturity - t <= 0.0 {
        return Err(PricerError::TauTooSmall { tau: 0.0 });
    }
    if let Payoff::Custom(p) = &opt.payoff {
        if !p.is_convex_non_affine(opt.strike) {
            return Err(PricerError::Invalid("custom payoff is not convex and non-affine; Vega may vanish".into()));
        }
    }
    let price = |s: f64| bs_price(opt, t, x, s);
    let (lower, upper) = match price_band(opt, x) {
        (l, _) if l.is_nan() => (price(IV_LOW)?, price(IV_HIGH)?),
        band => band,
    };
    if !(target > lower && target < upper) {
        return Err(PricerError::OutOfBand { target, lower, upper });
    }
    let tol = 1e-13 * opt.strike;
    let (mut lo, mut hi) = (IV_LOW, IV_HIGH);
    if price(lo)? > target {
        return Err(PricerError::OutOfBand { target, lower: price(lo)?, upper });
    }
    if price(hi)? < target {
        return Err(PricerError::OutOfBand { target, lower, upper: price(hi)? });
    }
    // Start from the Brenner-Subrahmanyam guess, clamped into the bracket.
    let rem = opt.maturity - t;
    let mut s = ((2.0 * PI / rem).sqrt() * target / x).clamp(0.05, 2.0);
    for _ in 0..IV_MAX_ITER {
        let f = price(s)? - target;
        if f.abs() <= tol {
            return Ok(s);
        }
        if f > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let vega = bs_vega(opt, t, x, s)?;
        let newton = s - f / vega;
        s = if vega > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * hi {
            return Ok(s);
        }
    }
    let f = price(s)? - target;
    if f.abs() <= 1e-10 * opt.strike {
        return Ok(s);
    }
    Err(PricerError::NoConvergence { lo, hi })
}
