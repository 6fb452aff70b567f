use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{HedgerError, SchemeKind};
use crate::mathkit::normal_cdf;
use crate::pricer::{
    bs_delta, corrected_delta, corrected_price, implied_vol, MarketParams, OptionSpec, Payoff, PricerError,
    TAU_FLOOR,
};

/// Delta on a `(t, x)` grid, bilinear inside and flat outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaTable {
    pub times: Vec<f64>,
    pub spots: Vec<f64>,
    /// `values[i][j]` is the delta at `times[i]`, `spots[j]`.
    pub values: Vec<Vec<f64>>,
}

fn bracket(grid: &[f64], v: f64) -> (usize, f64) {
    if grid.len() == 1 || v <= grid[0] {
        return (0, 0.0);
    }
    let last = grid.len() - 1;
    if v >= grid[last] {
        return (last - 1, 1.0);
    }
    let i = grid.partition_point(|g| *g <= v) - 1;
    (i, (v - grid[i]) / (grid[i + 1] - grid[i]))
}

impl DeltaTable {
    pub fn validate(&self) -> Result<(), HedgerError> {
        let increasing = |g: &[f64]| !g.is_empty() && g.windows(2).all(|w| w[0] < w[1]) && g.iter().all(|v| v.is_finite());
        if !increasing(&self.times) || !increasing(&self.spots) {
            return Err(HedgerError::Invalid("delta table axes must be non-empty, finite and strictly increasing".into()));
        }
        if self.values.len() != self.times.len() || self.values.iter().any(|r| r.len() != self.spots.len()) {
            return Err(HedgerError::Invalid("delta table values must be times × spots".into()));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(HedgerError::Invalid("delta table contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let row = |i: usize| -> f64 {
            let r = &self.values[i];
            if r.len() == 1 {
                return r[0];
            }
            let (j, w) = bracket(&self.spots, x);
            r[j] * (1.0 - w) + r[j + 1] * w
        };
        if self.times.len() == 1 {
            return row(0);
        }
        let (i, w) = bracket(&self.times, t);
        row(i) * (1.0 - w) + row(i + 1) * w
    }
}

/// A user-supplied delta `(t, x) ↦ δ`.
#[derive(Clone)]
pub enum CustomDelta {
    Table(DeltaTable),
    Function(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl CustomDelta {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            CustomDelta::Table(tab) => tab.eval(t, x),
            CustomDelta::Function(f) => f(t, x),
        }
    }
}

impl fmt::Debug for CustomDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CustomDelta::Table(t) => f.debug_tuple("Table").field(t).finish(),
            CustomDelta::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// A hedging scheme: the named kind and the hedging parameter `𝒟`.
///
/// `dcal` only enters the HW and BS deltas. A `custom_da` scheme carries its
/// delta in `custom`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HedgeScheme {
    pub kind: SchemeKind,
    #[serde(default)]
    pub dcal: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<DeltaTable>,
    #[serde(skip)]
    pub function: Option<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
}

impl fmt::Debug for HedgeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HedgeScheme")
            .field("kind", &self.kind)
            .field("dcal", &self.dcal)
            .field("table", &self.table)
            .field("function", &self.function.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl HedgeScheme {
    pub fn new(kind: SchemeKind, dcal: f64) -> Self {
        Self { kind, dcal, table: None, function: None }
    }

    pub fn h() -> Self {
        Self::new(SchemeKind::H, 0.0)
    }

    pub fn h_tilde() -> Self {
        Self::new(SchemeKind::HTilde, 0.0)
    }

    pub fn hw(dcal: f64) -> Self {
        Self::new(SchemeKind::HW, dcal)
    }

    pub fn bs(dcal: f64) -> Self {
        Self::new(SchemeKind::BS, dcal)
    }

    pub fn custom_table(table: DeltaTable) -> Self {
        Self { table: Some(table), ..Self::new(SchemeKind::CustomDa, 0.0) }
    }

    pub fn custom_fn(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { function: Some(Arc::new(f)), ..Self::new(SchemeKind::CustomDa, 0.0) }
    }

    pub fn with_dcal(&self, dcal: f64) -> Self {
        Self { dcal, ..self.clone() }
    }

    pub fn custom(&self) -> Option<CustomDelta> {
        match (&self.function, &self.table) {
            (Some(f), _) => Some(CustomDelta::Function(f.clone())),
            (None, Some(t)) => Some(CustomDelta::Table(t.clone())),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), HedgerError> {
        if !self.dcal.is_finite() {
            return Err(HedgerError::Domain { what: "dcal", value: self.dcal });
        }
        if let Some(t) = &self.table {
            t.validate()?;
        }
        if self.kind == SchemeKind::CustomDa && self.custom().is_none() {
            return Err(HedgerError::Invalid("custom_da scheme needs a delta table or function".into()));
        }
        Ok(())
    }
}

/// `D = 𝒟·√(2π)·σ̄²/K`, the correction amplitude matching a hedging parameter.
pub fn d_param_from_dcal(dcal: f64, strike: f64, sigma_bar: f64) -> f64 {
    dcal * (2.0 * PI).sqrt() * sigma_bar * sigma_bar / strike
}

/// `𝒟 = D·K / (√(2π)·σ̄²)`.
pub fn dcal_from_d_param(d_param: f64, strike: f64, sigma_bar: f64) -> f64 {
    d_param * strike / ((2.0 * PI).sqrt() * sigma_bar * sigma_bar)
}

enum Rule {
    /// Call or put: `δ = N(d₊) − put + 𝒟·c(d₋)/(x√τ)`.
    Closed { put: bool, hw: f64, bs: f64 },
    Quadrature { kind: SchemeKind, d_param: f64 },
    Custom(CustomDelta),
}

/// A scheme bound to an option and a market, ready for repeated evaluation.
pub(crate) struct Prepared<'a> {
    opt: &'a OptionSpec,
    sigma_bar: f64,
    rule: Rule,
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(scheme: &HedgeScheme, opt: &'a OptionSpec, mp: &MarketParams) -> Result<Self, HedgerError> {
        scheme.validate()?;
        opt.validate()?;
        mp.validate()?;
        let (hw, bs) = match scheme.kind {
            SchemeKind::HW => (scheme.dcal, 0.0),
            SchemeKind::BS => (0.0, scheme.dcal),
            _ => (0.0, 0.0),
        };
        let rule = match (&opt.payoff, scheme.kind) {
            (_, SchemeKind::CustomDa) => Rule::Custom(scheme.custom().expect("validated")),
            (Payoff::Call, _) => Rule::Closed { put: false, hw, bs },
            (Payoff::Put, _) => Rule::Closed { put: true, hw, bs },
            (Payoff::Custom(_), kind) => Rule::Quadrature {
                kind,
                d_param: d_param_from_dcal(scheme.dcal, opt.strike, mp.sigma_bar),
            },
        };
        Ok(Self { opt, sigma_bar: mp.sigma_bar, rule })
    }

    pub(crate) fn delta(&self, t: f64, x: f64) -> Result<f64, HedgerError> {
        let maturity = self.opt.maturity;
        if !(t >= 0.0 && t < maturity) {
            return Err(HedgerError::Domain { what: "hedging time", value: t });
        }
        if !(x > 0.0 && x.is_finite()) {
            return Err(HedgerError::Domain { what: "spot", value: x });
        }
        let value = match &self.rule {
            Rule::Closed { put, hw, bs } => {
                let tau = self.sigma_bar * self.sigma_bar * (maturity - t);
                if tau < TAU_FLOOR {
                    return Err(PricerError::TauTooSmall { tau }.into());
                }
                let sd = tau.sqrt();
                let d = (x / self.opt.strike).ln() / sd - 0.5 * sd;
                let mut delta = normal_cdf(d + sd) - if *put { 1.0 } else { 0.0 };
                if *hw != 0.0 || *bs != 0.0 {
                    let d2 = d * d;
                    delta += (hw * (d2 - 1.0) + bs * d2) * (-0.5 * d2).exp() / (x * sd);
                }
                delta
            }
            Rule::Quadrature { kind, d_param } => {
                let mp = MarketParams::effective(self.sigma_bar, *d_param, 0.0);
                match kind {
                    SchemeKind::HW => corrected_delta(self.opt, &mp, t, x)?,
                    SchemeKind::BS => {
                        let target = corrected_price(self.opt, &mp, t, x)?;
                        let sigma = implied_vol(self.opt, t, x, target)?;
                        bs_delta(self.opt, t, x, sigma)?
                    }
                    _ => bs_delta(self.opt, t, x, self.sigma_bar)?,
                }
            }
            Rule::Custom(f) => f.eval(t, x),
        };
        if !value.is_finite() {
            return Err(HedgerError::NonFiniteDelta { t, x });
        }
        Ok(value)
    }
}

/// Stock holding of `scheme` at `(t, x)`, for `0 ≤ t < T`.
pub fn delta(scheme: &HedgeScheme, opt: &OptionSpec, mp: &MarketParams, t: f64, x: f64) -> Result<f64, HedgerError> {
    Prepared::new(scheme, opt, mp)?.delta(t, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricer::SampledPayoff;
    use approx::assert_relative_eq;

    fn mp() -> MarketParams {
        MarketParams::effective(0.5, 0.0, 0.0)
    }

    fn d_minus(opt: &OptionSpec, sigma: f64, t: f64, x: f64) -> f64 {
        let sd = sigma * (opt.maturity - t).sqrt();
        (x / opt.strike).ln() / sd - 0.5 * sd
    }

    #[test]
    fn h_delta_at_d_plus_zero() {
        let opt = OptionSpec::call(1.0, 1.0);
        // d₊ = 0 when ln(x/K) = −τ/2
        let x = (-0.125f64).exp();
        assert_relative_eq!(delta(&HedgeScheme::h(), &opt, &mp(), 0.0, x).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(delta(&HedgeScheme::h_tilde(), &opt, &mp(), 0.0, x).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn corrections_at_d_minus_zero() {
        let opt = OptionSpec::call(1.0, 1.0);
        let x = 0.125f64.exp();
        let (t, dcal) = (0.0, -0.02);
        assert!(d_minus(&opt, 0.5, t, x).abs() < 1e-15);
        let h = delta(&HedgeScheme::h(), &opt, &mp(), t, x).unwrap();
        let bs = delta(&HedgeScheme::bs(dcal), &opt, &mp(), t, x).unwrap();
        let hw = delta(&HedgeScheme::hw(dcal), &opt, &mp(), t, x).unwrap();
        assert_relative_eq!(bs - h, 0.0, epsilon = 1e-15);
        assert_relative_eq!(hw - h, -dcal / (x * 0.5), max_relative = 1e-12);
    }

    #[test]
    fn hw_delta_matches_corrected_price_slope() {
        let (sb, dcal) = (0.5, -0.014);
        for opt in [OptionSpec::call(1.0, 1.0), OptionSpec::put(1.3, 0.7)] {
            let d_param = d_param_from_dcal(dcal, opt.strike, sb);
            let market = MarketParams::effective(sb, d_param, 0.0);
            for &(t, x) in &[(0.0, 1.0), (0.3, 0.8), (0.5, 1.25), (0.1, 1.6)] {
                let h = 1e-5 * x;
                let fd = (corrected_price(&opt, &market, t, x + h).unwrap() - corrected_price(&opt, &market, t, x - h).unwrap())
                    / (2.0 * h);
                let hw = delta(&HedgeScheme::hw(dcal), &opt, &mp(), t, x).unwrap();
                assert_relative_eq!(hw, fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn bs_delta_matches_implied_vol_slope() {
        let (sb, dcal) = (0.5, -0.014);
        let opt = OptionSpec::call(1.0, 1.0);
        let market = MarketParams::effective(sb, d_param_from_dcal(dcal, 1.0, sb), 0.0);
        for &(t, x) in &[(0.0, 1.0), (0.3, 0.8), (0.5, 1.25)] {
            // Q⁽⁰⁾ at the implied vol frozen at (t, x), differentiated in x
            let sigma = implied_vol(&opt, t, x, corrected_price(&opt, &market, t, x).unwrap()).unwrap();
            let h = 1e-5 * x;
            let fd = (crate::pricer::bs_price(&opt, t, x + h, sigma).unwrap()
                - crate::pricer::bs_price(&opt, t, x - h, sigma).unwrap())
                / (2.0 * h);
            // The closed form is first order in 𝒟.
            let bs = delta(&HedgeScheme::bs(dcal), &opt, &mp(), t, x).unwrap();
            assert!((bs - fd).abs() < 50.0 * dcal * dcal, "t={t} x={x}: {bs} vs {fd}");
        }
    }

    #[test]
    fn custom_payoff_routes_through_quadrature() {
        let grid: Vec<f64> = (0..=200).map(|i| -2.0 + 0.02 * i as f64).collect();
        let values = grid.iter().map(|y| (y.exp() - 1.0).max(0.0)).collect();
        let opt = OptionSpec {
            payoff: Payoff::Custom(SampledPayoff { log_moneyness: grid, values }),
            strike: 1.0,
            maturity: 1.0,
        };
        let call = OptionSpec::call(1.0, 1.0);
        for kind in [SchemeKind::H, SchemeKind::HW, SchemeKind::BS] {
            let s = HedgeScheme::new(kind, -0.01);
            let a = delta(&s, &opt, &mp(), 0.2, 1.1).unwrap();
            let b = delta(&s, &call, &mp(), 0.2, 1.1).unwrap();
            assert!((a - b).abs() < 0.02, "{kind}: {a} vs {b}");
        }
    }

    #[test]
    fn expiry_is_a_domain_error() {
        let opt = OptionSpec::call(1.0, 1.0);
        assert!(matches!(delta(&HedgeScheme::h(), &opt, &mp(), 1.0, 1.0), Err(HedgerError::Domain { .. })));
        assert!(delta(&HedgeScheme::h(), &opt, &mp(), 0.5, -1.0).is_err());
    }

    #[test]
    fn custom_table_and_function() {
        let table = DeltaTable {
            times: vec![0.0, 1.0],
            spots: vec![0.5, 1.5],
            values: vec![vec![0.0, 1.0], vec![0.2, 0.8]],
        };
        let opt = OptionSpec::call(1.0, 1.0);
        let s = HedgeScheme::custom_table(table);
        assert_relative_eq!(delta(&s, &opt, &mp(), 0.5, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(delta(&s, &opt, &mp(), 0.0, 9.0).unwrap(), 1.0, epsilon = 1e-15);
        let f = HedgeScheme::custom_fn(|t, x| t + x);
        assert_relative_eq!(delta(&f, &opt, &mp(), 0.25, 2.0).unwrap(), 2.25);
        let bad = HedgeScheme::custom_fn(|_, _| f64::NAN);
        assert!(matches!(delta(&bad, &opt, &mp(), 0.25, 2.0), Err(HedgerError::NonFiniteDelta { .. })));
        assert!(HedgeScheme::new(SchemeKind::CustomDa, 0.0).validate().is_err());
    }

    #[test]
    fn dcal_round_trip() {
        let d = d_param_from_dcal(-0.014, 1.2, 0.5);
        assert_relative_eq!(dcal_from_d_param(d, 1.2, 0.5), -0.014, max_relative = 1e-15);
    }
}
