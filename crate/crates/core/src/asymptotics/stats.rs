//! Leading-order mean and variance of the hedging cost `Y^C = E^C − P(0, X₀)`.

use serde::{Deserialize, Serialize};

use super::surfaces::cost_point;
use super::AsymptoticsError;
use crate::hedger::SchemeKind;
use crate::mathkit::{normal_pdf, GaussLegendre, QuadSpec};
use crate::pricer::{greek_ladder, BsPoint, MarketParams, OptionSpec, Payoff, PricerError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostStats {
    pub mean: f64,
    pub variance: f64,
}

fn check(opt: &OptionSpec, mp: &MarketParams, x0: f64, t: f64) -> Result<(), AsymptoticsError> {
    opt.validate()?;
    mp.validate()?;
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(AsymptoticsError::Invalid(format!("x0 must be > 0, got {x0}")));
    }
    if !(t > 0.0 && t <= opt.maturity) {
        return Err(AsymptoticsError::Invalid(format!("exercise time {t} outside (0, T]")));
    }
    if !(mp.gamma_param > 0.0) {
        return Err(AsymptoticsError::Invalid("predictions need Γ > 0".into()));
    }
    Ok(())
}

fn combine(kind: SchemeKind, mp: &MarketParams, terms: &GeneralCostTerms) -> Result<CostStats, AsymptoticsError> {
    let (d2, g2) = (mp.d_param * mp.d_param, mp.gamma_param * mp.gamma_param);
    let base = g2 * terms.var_gamma;
    Ok(match kind {
        SchemeKind::HW => CostStats { mean: 0.0, variance: base },
        SchemeKind::BS => CostStats { mean: 0.0, variance: base + d2 * terms.var_bs },
        SchemeKind::H => CostStats { mean: mp.d_param * terms.mean_h, variance: base + d2 * terms.var_h },
        SchemeKind::HTilde => CostStats { mean: 0.0, variance: base + d2 * terms.var_htilde },
        SchemeKind::CustomDa => return Err(AsymptoticsError::Unsupported("custom_da".into())),
    })
}

/// Call-option predictions from the closed-form surfaces.
pub fn predicted_cost_stats(
    kind: SchemeKind,
    opt: &OptionSpec,
    mp: &MarketParams,
    x0: f64,
    exercise_time: f64,
) -> Result<CostStats, AsymptoticsError> {
    check(opt, mp, x0, exercise_time)?;
    if opt.payoff != Payoff::Call {
        return Err(AsymptoticsError::Invalid("closed-form predictions cover the call only".into()));
    }
    let sb = mp.sigma_bar;
    let point = BsPoint::new(opt, sb, 0.0, x0)?;
    let theta = exercise_time / opt.maturity;
    let c = cost_point(theta, point.d_minus, &QuadSpec::default())?;
    let k = opt.strike;
    let (s2, s4) = (sb * sb, sb.powi(4));
    let terms = GeneralCostTerms {
        mean_h: (theta - 1.0) * k * c.g / s2,
        var_gamma: k * k * c.v / s2,
        var_h: k * k * c.w_h / s4,
        var_bs: k * k * c.w_bs / s4,
        var_htilde: k * k * c.w_htilde / s4,
    };
    combine(kind, mp, &terms)
}

/// Coefficients of `D` (mean) and of `D²`, `Γ²` (variances):
/// `Var(Y^C) ≈ Γ²·var_gamma + D²·var_C`, `E[Y^H] ≈ D·mean_h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralCostTerms {
    pub mean_h: f64,
    pub var_gamma: f64,
    pub var_h: f64,
    pub var_bs: f64,
    pub var_htilde: f64,
}

const OUTER_PANELS: usize = 8;
const OUTER_ORDER: usize = 24;
const INNER_ORDER: usize = 48;
const Z_MAX: f64 = 9.5;

/// Evaluates the general-payoff functionals with quadrature Greeks.
///
/// The time integral uses `s = T(1 − r²)` to absorb the `(T − s)^{-1/2}`
/// growth at maturity. The Gaussian integral is split around the point where
/// `X_s` crosses the strike, with a window scaled to the Greeks' width.
/// Best effort for payoffs other than the call.
pub fn general_cost_terms(
    opt: &OptionSpec,
    sigma_bar: f64,
    x0: f64,
    exercise_time: f64,
) -> Result<GeneralCostTerms, AsymptoticsError> {
    let mp = MarketParams::effective(sigma_bar, 0.0, 1.0);
    check(opt, &mp, x0, exercise_time)?;
    let big_t = opt.maturity;
    let t = exercise_time;
    let sb = sigma_bar;
    let ladder = |s: f64, x: f64| -> Result<Option<[f64; 3]>, AsymptoticsError> {
        match BsPoint::new(opt, sb, s, x) {
            Ok(p) => Ok(Some([greek_ladder(opt, &p, 0)?, greek_ladder(opt, &p, 1)?, greek_ladder(opt, &p, 2)?])),
            Err(PricerError::TauTooSmall { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    };
    let l1_0 = ladder(0.0, x0)?.map(|l| l[1]).unwrap_or(0.0);
    let gl_out = GaussLegendre::new(OUTER_ORDER);
    let gl_in = GaussLegendre::new(INNER_ORDER);
    let d0 = (x0 / opt.strike).ln() / (sb * big_t.sqrt()) - 0.5 * sb * big_t.sqrt();

    // [∫L0², ∫(t−s)L1², ∫(t−s)L2L0, ∫H̃², ∫H̃L0, ∫(T−s)²L2², ∫(T−s)L2L0]
    let inner = |s: f64| -> Result<[f64; 7], AsymptoticsError> {
        let mut acc = [0.0; 7];
        if s <= 0.0 {
            return Ok(acc);
        }
        let theta = s / big_t;
        let centre = -d0 / theta.sqrt();
        let width = 8.0 * ((1.0 - theta).max(0.0) / theta).sqrt();
        let mut cuts = vec![-Z_MAX, centre - width, centre, centre + width, Z_MAX];
        for c in cuts.iter_mut() {
            *c = c.clamp(-Z_MAX, Z_MAX);
        }
        let rem = big_t - s;
        for w in cuts.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for (u, wt) in gl_in.nodes().iter().zip(gl_in.weights()) {
                let z = c + h * u;
                let x = x0 * (sb * s.sqrt() * z - 0.5 * sb * sb * s).exp();
                let Some([l0, l1, l2]) = ladder(s, x)? else { continue };
                let weight = wt * h * normal_pdf(z);
                let htilde = if l0 > 0.0 { rem * (l2 - l1 * l1 / l0) } else { 0.0 };
                let vals = [
                    l0 * l0,
                    (t - s) * l1 * l1,
                    (t - s) * l2 * l0,
                    htilde * htilde,
                    htilde * l0,
                    rem * rem * l2 * l2,
                    rem * l2 * l0,
                ];
                for (a, v) in acc.iter_mut().zip(vals) {
                    *a += weight * v;
                }
            }
        }
        Ok(acc)
    };
    let r_lo = (1.0 - t / big_t).max(0.0).sqrt();
    let mut total = [0.0; 7];
    let step = (1.0 - r_lo) / OUTER_PANELS as f64;
    for p in 0..OUTER_PANELS {
        let (a, b) = (r_lo + p as f64 * step, r_lo + (p + 1) as f64 * step);
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        for (u, wt) in gl_out.nodes().iter().zip(gl_out.weights()) {
            let r = c + h * u;
            let s = big_t * (1.0 - r * r);
            let jac = 2.0 * big_t * r;
            let vals = inner(s)?;
            for (acc, v) in total.iter_mut().zip(vals) {
                *acc += wt * h * jac * v;
            }
        }
    }
    let [i_l0sq, i_l1sq, i_l2l0, i_ht2, i_htl0, i_l2sq, i_l2l0_t] = total;
    Ok(GeneralCostTerms {
        mean_h: (t - big_t) * l1_0,
        var_gamma: i_l0sq,
        var_h: 2.0 * i_l1sq - (t * l1_0).powi(2) + 2.0 * i_l2l0,
        var_bs: sb * sb * i_ht2 + 2.0 * i_htl0,
        var_htilde: sb * sb * i_l2sq + 2.0 * i_l2l0_t,
    })
}

/// Predictions for any payoff through [`general_cost_terms`].
pub fn general_cost_stats(
    kind: SchemeKind,
    opt: &OptionSpec,
    mp: &MarketParams,
    x0: f64,
    exercise_time: f64,
) -> Result<CostStats, AsymptoticsError> {
    check(opt, mp, x0, exercise_time)?;
    let terms = general_cost_terms(opt, mp.sigma_bar, x0, exercise_time)?;
    combine(kind, mp, &terms)
}

/// `St.Dev(Y_T^HW)·σ̄/(KΓ) = √(v(1; d₋))` over relative maturities `τ = σ̄²T`
/// and moneyness `m = X₀/K`; indexed `[τ][m]`.
pub fn hw_stdev_surface(taus: &[f64], moneyness: &[f64], spec: &QuadSpec) -> Result<Vec<Vec<f64>>, AsymptoticsError> {
    taus.iter()
        .map(|&tau| {
            if !(tau > 0.0) {
                return Err(AsymptoticsError::Invalid(format!("τ must be > 0, got {tau}")));
            }
            moneyness
                .iter()
                .map(|&m| {
                    if !(m > 0.0) {
                        return Err(AsymptoticsError::Invalid(format!("moneyness must be > 0, got {m}")));
                    }
                    let d = m.ln() / tau.sqrt() - 0.5 * tau.sqrt();
                    Ok(cost_point(1.0, d, spec)?.v.sqrt())
                })
                .collect()
        })
        .collect()
}
