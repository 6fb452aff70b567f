//! `D̄`, `Γ̄` and their ExpOU closed forms `α = D̄/σ̄³`, `β = Γ̄/σ̄²`.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AsymptoticsError;
use crate::mathkit::{
    exp_integral_ein_plus, integrate_1d_with_error, BivariateGaussian, Decay, Domain, GaussHermite,
    GaussLegendre, QuadSpec,
};
use crate::pricer::MarketParams;
use crate::volsim::{covariance_cz, kernel_total_integral, KernelFn, KernelSpec, VolModel};

/// Gauss-Hermite order per axis for the inner bivariate expectations.
pub const INNER_GH_ORDER: usize = 32;
const CHEB_ORDER: usize = 64;
const PANEL_ORDER: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub d_bar: f64,
    pub gamma_bar: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rho_bar: f64,
}

impl EffectiveParams {
    fn assemble(model: &VolModel, d_bar: f64, gamma_bar: f64) -> Self {
        let sb = model.sigma_bar;
        let alpha = d_bar / sb.powi(3);
        let beta = gamma_bar / (sb * sb);
        let rho_bar = if beta > 0.0 { model.rho * alpha / beta } else { 0.0 };
        Self { d_bar, gamma_bar, alpha, beta, rho_bar }
    }

    /// General quadrature for any kernel and volatility map.
    pub fn from_model(model: &VolModel, spec: &QuadSpec) -> Result<Self, AsymptoticsError> {
        let d = dbar_general(model, spec)?;
        let g = gammabar_general(model, spec)?;
        Ok(Self::assemble(model, d, g))
    }

    /// Closed forms, valid for the exponential map with the standard OU kernel.
    pub fn expou_closed_form(model: &VolModel) -> Result<Self, AsymptoticsError> {
        if !model.kernel.is_markov() {
            return Err(AsymptoticsError::Invalid("the closed forms need the standard OU kernel".into()));
        }
        let (alpha, beta) = expou_alpha_beta(model.omega)?;
        let sb = model.sigma_bar;
        Ok(Self::assemble(model, alpha * sb.powi(3), beta * sb * sb))
    }

    /// `(σ̄, D, Γ)` with `D = √ε ρ D̄`, `Γ = √ε Γ̄`.
    pub fn market_params(&self, model: &VolModel) -> MarketParams {
        MarketParams::from_raw(model.sigma_bar, model.epsilon(), model.rho, self.d_bar, self.gamma_bar)
    }
}

/// `(α, β)` for ExpOU: `α = e^{−ω²/2}(e^{2ω²} − 1)/(√2 ω)` and
/// `β² = ½ Ein(4ω²) = ½ Σ_{k≥1} (4ω²)^k / (k·k!)`.
pub fn expou_alpha_beta(omega: f64) -> Result<(f64, f64), AsymptoticsError> {
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(AsymptoticsError::Invalid(format!("omega must be ≥ 0, got {omega}")));
    }
    if omega == 0.0 {
        return Ok((0.0, 0.0));
    }
    let w2 = omega * omega;
    let alpha = (-0.5 * w2).exp() * (2.0 * w2).exp_m1() / (SQRT_2 * omega);
    let beta2 = 0.5 * exp_integral_ein_plus(4.0 * w2);
    if !(beta2 >= 0.0) || !beta2.is_finite() {
        return Err(AsymptoticsError::NegativeBetaSquared { omega, value: beta2 });
    }
    Ok((alpha, beta2.sqrt()))
}

/// Chebyshev interpolant of `c ↦ E[f(Z₁, Z₂)]`, `corr(Z₁, Z₂) = c`, on `[−1, 1]`.
struct CorrelationTable {
    coeffs: Vec<f64>,
}

impl CorrelationTable {
    fn new(f: impl Fn(f64, f64) -> f64 + Sync, gh_order: usize) -> Result<Self, AsymptoticsError> {
        let rule = GaussHermite::new(gh_order);
        let n = CHEB_ORDER;
        let values = (0..n)
            .map(|k| {
                let c = (PI * (k as f64 + 0.5) / n as f64).cos();
                Ok(BivariateGaussian::new(c)?.expect(&rule, &f))
            })
            .collect::<Result<Vec<f64>, AsymptoticsError>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AsymptoticsError::Invalid("volatility map gives non-finite Gaussian moments".into()));
        }
        let coeffs = (0..n)
            .map(|j| {
                let s: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                    .sum();
                2.0 * s / n as f64
            })
            .collect();
        Ok(Self { coeffs })
    }

    fn eval(&self, c: f64) -> f64 {
        let x = c.clamp(-1.0, 1.0);
        let (mut b1, mut b2) = (0.0, 0.0);
        for a in self.coeffs.iter().skip(1).rev() {
            let b0 = a + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        0.5 * self.coeffs[0] + x * b1 - b2
    }
}

fn origin_power(spec: &KernelSpec) -> f64 {
    // s = u^p smooths s^a and s^{2a} singularities and the s^{2H} cusp of 𝒞_Z.
    1.0 / (2.0 * spec.hurst())
}

fn check_model(model: &VolModel) -> Result<(), AsymptoticsError> {
    model.validate()?;
    Ok(())
}

/// `D̄ = σ_z ∫₀^∞ E[F(σ_z Z) FF′(σ_z Z′)]_{𝒞_Z(s)} 𝒦(s) ds`.
pub fn dbar_general(model: &VolModel, spec: &QuadSpec) -> Result<f64, AsymptoticsError> {
    dbar_general_with(model, spec, INNER_GH_ORDER)
}

pub fn dbar_general_with(model: &VolModel, spec: &QuadSpec, gh_order: usize) -> Result<f64, AsymptoticsError> {
    check_model(model)?;
    spec.validate()?;
    let sz = model.sigma_z;
    let table = CorrelationTable::new(
        |a, b| model.vol(sz * a) * model.vol(sz * b) * model.vol_prime(sz * b),
        gh_order,
    )?;
    let g0 = table.eval(0.0);
    let kspec = model.kernel;
    let k = KernelFn::new(&kspec);
    // G(𝒞) = G(0) + [G(𝒞) − G(0)]; the constant part integrates 𝒦 exactly.
    let rest = |s: f64| -> f64 {
        let c = covariance_cz(&kspec, s).unwrap_or(0.0);
        k.eval(s) * (table.eval(c) - g0)
    };
    let p = origin_power(&kspec);
    let head = integrate_1d_with_error(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let s = u.powf(p);
            rest(s) * p * s / u
        },
        Domain::Interval(0.0, 1.0),
        spec,
    )?;
    let decay = if kspec.is_markov() { Decay::Exponential(1.0) } else { Decay::Power(3.5 - 3.0 * kspec.hurst()) };
    let tail = integrate_1d_with_error(rest, Domain::HalfLine { start: 1.0, decay }, spec)?;
    Ok(sz * (g0 * kernel_total_integral(&kspec) + head.value + tail.value))
}

/// Gauss-Legendre rule on `[0, 1]` with its cumulative integration matrix
/// `cum[j][i] = ∫₀^{x_j} ℓ_i`, `ℓ_i` the Lagrange basis on the nodes.
struct PanelRule {
    x: Vec<f64>,
    w: Vec<f64>,
    cum: Vec<Vec<f64>>,
}

impl PanelRule {
    fn new(n: usize) -> Self {
        let gl = GaussLegendre::new(n);
        let x: Vec<f64> = gl.nodes().iter().map(|t| 0.5 * (t + 1.0)).collect();
        let w: Vec<f64> = gl.weights().iter().map(|v| 0.5 * v).collect();
        let lagrange = |i: usize, t: f64| -> f64 {
            x.iter()
                .enumerate()
                .filter(|(m, _)| *m != i)
                .map(|(_, xm)| (t - xm) / (x[i] - xm))
                .product()
        };
        let cum = x
            .iter()
            .map(|xj| {
                (0..n)
                    .map(|i| xj * x.iter().zip(&w).map(|(xm, wm)| wm * lagrange(i, xj * xm)).sum::<f64>())
                    .collect()
            })
            .collect();
        Self { x, w, cum }
    }
}

/// Composite nodes on `[0, last]`: a first panel `[0, first]` mapped by
/// `s = first·u^p`, then doubling panels.
struct Composite {
    nodes: Vec<f64>,
    /// Length times Jacobian at each node; quadrature weight is `w_i · scale`.
    scale: Vec<f64>,
}

impl Composite {
    fn new(rule: &PanelRule, first: f64, last: f64, p: f64) -> Self {
        let mut nodes = Vec::new();
        let mut scale = Vec::new();
        for u in &rule.x {
            nodes.push(first * u.powf(p));
            scale.push(first * p * u.powf(p - 1.0));
        }
        let mut b = first;
        while b < last {
            for u in &rule.x {
                nodes.push(b + b * u);
                scale.push(b);
            }
            b *= 2.0;
        }
        Self { nodes, scale }
    }

    fn integrate(&self, rule: &PanelRule, f: &[f64]) -> f64 {
        let n = rule.x.len();
        f.iter().enumerate().map(|(i, v)| rule.w[i % n] * self.scale[i] * v).sum()
    }

    /// `∫₀^{node} f` at every node.
    fn cumulative(&self, rule: &PanelRule, f: &[f64]) -> Vec<f64> {
        let n = rule.x.len();
        let mut out = Vec::with_capacity(f.len());
        let mut base = 0.0;
        for (panel, chunk) in f.chunks(n).enumerate() {
            let sc = &self.scale[panel * n..(panel + 1) * n];
            for j in 0..n {
                let part: f64 = (0..n).map(|i| rule.cum[j][i] * sc[i] * chunk[i]).sum();
                out.push(base + part);
            }
            base += (0..n).map(|i| rule.w[i] * sc[i] * chunk[i]).sum::<f64>();
        }
        out
    }
}

/// `Γ̄² = 2σ_z² ∫₀^∞∫_s^∞ E[FF′(σ_z Z) FF′(σ_z Z′)]_{𝒞_𝒦(s,s′)} 𝒦(s)𝒦(s′) ds′ ds`;
/// returns `Γ̄`.
pub fn gammabar_general(model: &VolModel, spec: &QuadSpec) -> Result<f64, AsymptoticsError> {
    let _ = spec.validate()?;
    gammabar_general_with(model, INNER_GH_ORDER, PANEL_ORDER)
}

/// `Γ̄` with explicit inner Gauss-Hermite order and composite panel order.
pub fn gammabar_general_with(model: &VolModel, gh_order: usize, panel_order: usize) -> Result<f64, AsymptoticsError> {
    check_model(model)?;
    let sz = model.sigma_z;
    let ffp = |z: f64| model.vol(sz * z) * model.vol_prime(sz * z);
    let table = CorrelationTable::new(|a, b| ffp(a) * ffp(b), gh_order)?;
    let g0 = table.eval(0.0);
    let kspec = model.kernel;
    let k = KernelFn::new(&kspec);
    let markov = kspec.is_markov();
    let p = origin_power(&kspec);
    let (first, last) = if markov { (1.0, 64.0) } else { (2f64.powi(-14), 2f64.powi(20)) };
    let rule = PanelRule::new(panel_order);
    let outer = Composite::new(&rule, first, last, p);

    // Split 𝒞 ↦ G(0) + [G(𝒞) − G(0)]: the constant part gives G(0)(∫𝒦)²/2.
    let inner = |delta: f64| -> Result<f64, AsymptoticsError> {
        let s_first = if markov { first } else { first.min(delta).max(1e-13) };
        let grid = Composite::new(&rule, s_first, last, p);
        let ks: Vec<f64> = grid.nodes.iter().map(|s| k.eval(*s)).collect();
        let ksd: Vec<f64> = grid.nodes.iter().map(|s| k.eval(s + delta)).collect();
        let prod: Vec<f64> = ks.iter().zip(&ksd).map(|(a, b)| a * b).collect();
        let overlap: Vec<f64> = if markov {
            grid.nodes.iter().map(|s| (-(2.0 * s + delta)).exp()).collect()
        } else {
            // 𝒞_𝒦(s, s+δ) = 𝒞_Z(δ) − ∫₀^s 𝒦(u)𝒦(u+δ) du
            let full = covariance_cz(&kspec, delta)?;
            grid.cumulative(&rule, &prod).into_iter().map(|v| full - v).collect()
        };
        let vals: Vec<f64> = prod.iter().zip(&overlap).map(|(kk, c)| kk * (table.eval(*c) - g0)).collect();
        Ok(grid.integrate(&rule, &vals))
    };
    let per_delta = outer
        .nodes
        .par_iter()
        .map(|d| inner(*d))
        .collect::<Result<Vec<f64>, AsymptoticsError>>()?;
    let total_k = kernel_total_integral(&kspec);
    let half = 0.5 * g0 * total_k * total_k + outer.integrate(&rule, &per_delta);
    let g2 = 2.0 * sz * sz * half;
    if !g2.is_finite() || g2 < -1e-12 * (g0.abs() + 1.0) {
        return Err(AsymptoticsError::Invalid(format!("Γ̄² evaluated to {g2}")));
    }
    Ok(g2.max(0.0).sqrt())
}
