//! Call hedging-cost surfaces `g`, `v`, `w^C` as functions of `θ = t/T` and `d₋`.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AsymptoticsError;
use crate::mathkit::{integrate_1d_with_error, Domain, MathError, QuadSpec};

/// Gaussian moments `E[d₋^{2j} e^{−d₋²}]` at relative time `s`, divided by
/// `exp(−d²/(1+s))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentFunctions {
    pub f0: f64,
    pub f2: f64,
    pub f4: f64,
}

/// Moment functions with `u = √(1−s)` passed separately so that callers can
/// supply the exact complement near `s = 1`.
fn moments_u(s: f64, u: f64, d: f64) -> MomentFunctions {
    let q = 1.0 + s;
    let d2 = d * d;
    let u2 = u * u;
    let f0 = u / q.sqrt();
    let f2 = d2 * u * u2 / q.powf(2.5) + s * u / q.powf(1.5);
    let f4 = d2 * d2 * u * u2 * u2 / q.powf(4.5) + 6.0 * d2 * s * u * u2 / q.powf(3.5) + 3.0 * s * s * u / q.powf(2.5);
    MomentFunctions { f0, f2, f4 }
}

/// `f₀`, `f₂`, `f₄` for `s ∈ [0, 1]`.
pub fn moment_functions(s: f64, d: f64) -> MomentFunctions {
    let s = s.clamp(0.0, 1.0);
    moments_u(s, (1.0 - s).sqrt(), d)
}

/// Surface values at one `(θ, d₋)`, normalized by `K` (for `g`) and `K²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub g: f64,
    pub v: f64,
    pub w_h: f64,
    pub w_bs: f64,
    pub w_htilde: f64,
}

pub fn g_of(d: f64) -> f64 {
    -d * (-0.5 * d * d).exp() / (2.0 * PI).sqrt()
}

/// The three integrals over `s ∈ [0, θ]`, evaluated in `u` with `s = 1 − u²`.
/// The `w^H` integrand carries `2f₂ − f₀`, the moment that the squared
/// `(x∂ₓ)(x²∂ₓ²)` Greek produces; with it `w^H = w^H̃` at `θ = 1`.
/// With `κ = 1 − θ`, the weights `1/√(1−s²)`, `(θ−s)/(1−s)²` and `1/(1−s)`
/// become smooth on `u ∈ [√κ, 1]`.
fn integrals(theta: f64, d: f64, spec: &QuadSpec) -> Result<(f64, f64, f64), MathError> {
    if theta <= 0.0 {
        return Ok((0.0, 0.0, 0.0));
    }
    let kappa = 1.0 - theta;
    let lo = kappa.max(0.0).sqrt();
    let d2 = d * d;
    let point = |u: f64| {
        let s = 1.0 - u * u;
        let q = 1.0 + s;
        (s, q, (-d2 / q).exp())
    };
    let v = integrate_1d_with_error(
        |u| {
            let (_, q, e) = point(u);
            e / q.sqrt() / PI
        },
        Domain::Interval(lo, 1.0),
        spec,
    )?;
    // 2f₂ − f₀ = u·Φ and f₄ − f₀ = u·Ψ
    let phi_psi = |s: f64, u: f64, q: f64| {
        let u2 = u * u;
        let m2 = d2 * u2 / q.powf(2.5) + s / q.powf(1.5);
        let m4 = d2 * d2 * u2 * u2 / q.powf(4.5) + 6.0 * d2 * s * u2 / q.powf(3.5) + 3.0 * s * s / q.powf(2.5);
        let m0 = 1.0 / q.sqrt();
        (2.0 * m2 - m0, m4 - m0)
    };
    let wh = integrate_1d_with_error(
        |u| {
            let (s, q, e) = point(u);
            let (phi, _) = phi_psi(s, u, q);
            // (θ − s)/u² = 1 − κ/u²
            2.0 / PI * e * (1.0 - kappa / (u * u)) * phi
        },
        Domain::Interval(lo, 1.0),
        spec,
    )?;
    let wt = integrate_1d_with_error(
        |u| {
            let (s, q, e) = point(u);
            let (_, psi) = phi_psi(s, u, q);
            e * psi / PI
        },
        Domain::Interval(lo, 1.0),
        spec,
    )?;
    let w_h = wh.value - theta * theta * d2 * (-d2).exp() / (2.0 * PI);
    Ok((v.value, w_h, wt.value))
}

/// `g`, `v`, `w^H`, `w^BS = −v`, `w^H̃` at one grid point.
pub fn cost_point(theta: f64, d_minus: f64, spec: &QuadSpec) -> Result<CostPoint, AsymptoticsError> {
    if !(theta >= 0.0 && theta <= 1.0) || !d_minus.is_finite() {
        return Err(AsymptoticsError::Invalid(format!("need θ ∈ [0, 1] and finite d₋, got ({theta}, {d_minus})")));
    }
    let (v, w_h, w_htilde) = integrals(theta, d_minus, spec)
        .map_err(|source| AsymptoticsError::Cell { theta, d_minus, source })?;
    Ok(CostPoint { g: g_of(d_minus), v, w_h, w_bs: -v, w_htilde })
}

/// Surfaces over a `θ × d₋` grid; matrices are indexed `[θ][d₋]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSurface {
    pub theta: Vec<f64>,
    pub d_minus: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub w_h: Vec<Vec<f64>>,
    pub w_bs: Vec<Vec<f64>>,
    pub w_htilde: Vec<Vec<f64>>,
}

pub fn cost_surfaces(theta_grid: &[f64], dminus_grid: &[f64], spec: &QuadSpec) -> Result<CostSurface, AsymptoticsError> {
    spec.validate()?;
    if let Some(t) = theta_grid.iter().find(|t| !(**t >= 0.0 && **t <= 1.0)) {
        return Err(AsymptoticsError::Invalid(format!("θ = {t} outside [0, 1]")));
    }
    let nd = dminus_grid.len();
    let results: Vec<Result<CostPoint, AsymptoticsError>> = (0..theta_grid.len() * nd)
        .into_par_iter()
        .map(|i| cost_point(theta_grid[i / nd], dminus_grid[i % nd], spec))
        .collect();
    let failed: Vec<String> = results.iter().filter_map(|r| r.as_ref().err().map(|e| e.to_string())).collect();
    if !failed.is_empty() {
        return Err(AsymptoticsError::CellFailures(failed));
    }
    let cells: Vec<CostPoint> = results.into_iter().map(|r| r.expect("checked")).collect();
    let pick = |f: fn(&CostPoint) -> f64| -> Vec<Vec<f64>> {
        cells.chunks(nd.max(1)).map(|row| row.iter().map(f).collect()).collect()
    };
    Ok(CostSurface {
        theta: theta_grid.to_vec(),
        d_minus: dminus_grid.to_vec(),
        g: pick(|c| c.g),
        v: pick(|c| c.v),
        w_h: pick(|c| c.w_h),
        w_bs: pick(|c| c.w_bs),
        w_htilde: pick(|c| c.w_htilde),
    })
}

impl CostSurface {
    /// Long format: `theta,d_minus,g,v,w_h,w_bs,w_htilde`.
    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<(), AsymptoticsError> {
        use std::io::Write;
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for c in comments {
            writeln!(file, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["theta", "d_minus", "g", "v", "w_h", "w_bs", "w_htilde"])?;
        for (i, t) in self.theta.iter().enumerate() {
            for (j, d) in self.d_minus.iter().enumerate() {
                w.serialize((t, d, self.g[i][j], self.v[i][j], self.w_h[i][j], self.w_bs[i][j], self.w_htilde[i][j]))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
