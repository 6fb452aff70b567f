//! Choice of the hedging parameter `𝒟` from a fixed set of paths.

use serde::{Deserialize, Serialize};

use super::cost::{accumulate_costs, CostTask};
use super::summary::mean_stdev;
use super::{HedgeScheme, HedgerError, SchemeKind};
use crate::pricer::{MarketParams, OptionSpec, Payoff};
use crate::volsim::PathSource;

/// The run equivalent to spot `m·K` with strike `K = opt.strike` on paths
/// that start at `x0`.
///
/// Prices are homogeneous of degree one in `(x, K)` and the paths are
/// multiplicative, so the case is hedged with strike `x0/m` and `𝒟/λ`,
/// `λ = m·K/x0`; its costs times `λ` are the costs at the reference strike.
/// Returns the rescaled scheme, the option, and `λ`.
pub fn at_moneyness(scheme: &HedgeScheme, opt: &OptionSpec, x0: f64, m: f64) -> (HedgeScheme, OptionSpec, f64) {
    let lambda = m * opt.strike / x0;
    let mut scaled = scheme.with_dcal(scheme.dcal / lambda);
    // A custom delta is given at reference-strike spots; the case spot `x`
    // corresponds to `λx` there.
    if let Some(t) = &mut scaled.table {
        t.spots.iter_mut().for_each(|s| *s /= lambda);
    }
    if let Some(f) = scheme.function.clone() {
        scaled.function = Some(std::sync::Arc::new(move |t, x| f(t, lambda * x)));
    }
    (scaled, OptionSpec { strike: x0 / m, ..opt.clone() }, lambda)
}

/// Search settings for [`calibrate_dcal`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcalSearch {
    /// `x₀/K` values, reached by moving the spot with the strike held at
    /// `opt.strike`; the objective is the uniform average over them.
    pub moneyness: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    /// Coarse grid points on `[lower, upper]`.
    pub grid_points: usize,
    /// Golden-section stopping width.
    pub tolerance: f64,
}

impl Default for DcalSearch {
    fn default() -> Self {
        Self {
            moneyness: vec![0.8, 0.9, 1.0, 1.1, 1.2],
            lower: -0.05,
            upper: 0.05,
            grid_points: 101,
            tolerance: 1e-6,
        }
    }
}

impl DcalSearch {
    fn validate(&self) -> Result<(), HedgerError> {
        if self.moneyness.is_empty() || self.moneyness.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(HedgerError::Invalid("moneyness grid must be non-empty and positive".into()));
        }
        if !(self.lower < self.upper && self.lower.is_finite() && self.upper.is_finite()) {
            return Err(HedgerError::Invalid(format!("bad search interval [{}, {}]", self.lower, self.upper)));
        }
        if self.grid_points < 3 {
            return Err(HedgerError::Invalid("grid_points must be ≥ 3".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(HedgerError::Invalid("tolerance must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub kind: SchemeKind,
    pub dcal: f64,
    pub objective: f64,
    /// `(𝒟, objective)` on the coarse grid.
    pub curve: Vec<(f64, f64)>,
    pub multiple_minima: bool,
}

/// Sample (co)variances `(Var a, Cov(a, b), Var b)`.
fn moments(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let n = a.len() as f64;
    let (ma, _) = mean_stdev(a);
    let (mb, _) = mean_stdev(b);
    let cov = |u: &[f64], mu: f64, v: &[f64], mv: f64| {
        let prod: Vec<f64> = u.iter().zip(v).map(|(x, y)| (x - mu) * (y - mv)).collect();
        mean_stdev(&prod).0 * n / (n - 1.0)
    };
    (cov(a, ma, a, ma), cov(a, ma, b, mb), cov(b, mb, b, mb))
}

/// `stdev(a − 𝒟 b)` from the moments of `a` and `b`.
fn stdev_at((vaa, vab, vbb): (f64, f64, f64), dcal: f64) -> f64 {
    (vaa - 2.0 * dcal * vab + dcal * dcal * vbb).max(0.0).sqrt()
}

/// `𝒟*` minimizing the uniform average over moneyness of `stdev(E)` for the
/// HW or BS scheme, with every candidate priced on the same paths.
///
/// For calls and puts the closed-form deltas are affine in `𝒟`, so one pass
/// yields the exact objective for every candidate. Other payoffs re-run the
/// paths for each candidate.
pub fn calibrate_dcal<S: PathSource>(
    kind: SchemeKind,
    opt: &OptionSpec,
    mp: &MarketParams,
    source: &S,
    search: &DcalSearch,
) -> Result<CalibrationResult, HedgerError> {
    if !matches!(kind, SchemeKind::HW | SchemeKind::BS) {
        return Err(HedgerError::Invalid(format!("calibration applies to HW or BS, not {kind}")));
    }
    search.validate()?;
    let x0 = source.x0();
    let cases: Vec<(OptionSpec, f64)> = search
        .moneyness
        .iter()
        .map(|&m| {
            let (_, o, lambda) = at_moneyness(&HedgeScheme::new(kind, 0.0), opt, x0, m);
            (o, lambda)
        })
        .collect();
    let exercise = opt.maturity;
    let m = cases.len() as f64;

    let objective: Box<dyn Fn(f64) -> Result<f64, HedgerError> + '_> = match opt.payoff {
        Payoff::Call | Payoff::Put => {
            // Per case E(𝒟/λ) = a − (𝒟/λ)·b with b = E(0) − E(1), so the
            // reference-strike cost λa − 𝒟b has variance quadratic in 𝒟.
            let mut tasks = Vec::new();
            for (o, _) in &cases {
                tasks.push(CostTask::new(HedgeScheme::new(kind, 0.0), o.clone(), exercise));
                tasks.push(CostTask::new(HedgeScheme::new(kind, 1.0), o.clone(), exercise));
            }
            let out = accumulate_costs(&tasks, mp, source)?;
            let per_strike: Vec<(f64, f64, f64)> = out
                .chunks(2)
                .zip(&cases)
                .map(|(pair, (_, lambda))| {
                    let a = &pair[0].costs;
                    let b: Vec<f64> = a.iter().zip(&pair[1].costs).map(|(e0, e1)| e0 - e1).collect();
                    let (vaa, vab, vbb) = moments(a, &b);
                    (lambda * lambda * vaa, lambda * vab, vbb)
                })
                .collect();
            Box::new(move |d| Ok(per_strike.iter().map(|mo| stdev_at(*mo, d)).sum::<f64>() / m))
        }
        Payoff::Custom(_) => Box::new(move |d| {
            let tasks: Vec<CostTask> = cases
                .iter()
                .map(|(o, lambda)| CostTask::new(HedgeScheme::new(kind, d / lambda), o.clone(), exercise))
                .collect();
            let out = accumulate_costs(&tasks, mp, source)?;
            Ok(out.iter().zip(&cases).map(|(o, (_, lambda))| lambda * o.stdev).sum::<f64>() / m)
        }),
    };

    let n = search.grid_points;
    let step = (search.upper - search.lower) / (n - 1) as f64;
    let curve = (0..n)
        .map(|i| {
            let d = search.lower + step * i as f64;
            objective(d).map(|v| (d, v))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let best = (0..n).min_by(|&i, &j| curve[i].1.total_cmp(&curve[j].1)).expect("non-empty grid");
    let local_minima = (0..n)
        .filter(|&i| {
            let left = i == 0 || curve[i].1 < curve[i - 1].1;
            let right = i == n - 1 || curve[i].1 <= curve[i + 1].1;
            left && right
        })
        .count();
    let multiple_minima = local_minima > 1;
    if multiple_minima {
        log::warn!("calibration objective has {local_minima} local minima on the grid; returning the global grid minimum");
        return Ok(CalibrationResult { kind, dcal: curve[best].0, objective: curve[best].1, curve, multiple_minima });
    }
    if best == 0 || best == n - 1 {
        log::warn!("calibration minimum sits on the search boundary {}", curve[best].0);
    }

    // Golden section on the bracket around the grid minimum.
    let mut lo = curve[best.saturating_sub(1)].0;
    let mut hi = curve[(best + 1).min(n - 1)].0;
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (objective(c)?, objective(d)?);
    while hi - lo > search.tolerance {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = objective(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = objective(d)?;
        }
    }
    let (mut dcal, mut value) = if fc < fd { (c, fc) } else { (d, fd) };
    if curve[best].1 < value {
        (dcal, value) = curve[best];
    }
    Ok(CalibrationResult { kind, dcal, objective: value, curve, multiple_minima })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hedger::{accumulate_cost, DeltaTable};
    use crate::volsim::{simulate_market, GridSpec, KernelSpec, VolMap, VolModel};
    use approx::assert_relative_eq;

    fn batch(rho: f64, seed: u64) -> crate::volsim::PathBatch {
        let model = VolModel {
            kernel: KernelSpec::standard_ou(0.05),
            sigma_z: 1.0,
            map: VolMap::ExpOu,
            omega: 0.5,
            sigma_bar: 0.5,
            rho,
        };
        simulate_market(&model, &GridSpec::new(1.0, 256), 1.0, 1000, seed).unwrap()
    }

    #[test]
    fn linear_objective_matches_direct_runs() {
        let b = batch(-0.5, 5);
        let opt = OptionSpec::call(1.0, 1.0);
        let mp = MarketParams::black_scholes(0.5);
        let search = DcalSearch { moneyness: vec![0.9, 1.1], grid_points: 11, ..Default::default() };
        let res = calibrate_dcal(SchemeKind::BS, &opt, &mp, &b, &search).unwrap();
        for &(d, v) in res.curve.iter().step_by(5) {
            let direct: f64 = [0.9, 1.1]
                .iter()
                .map(|&m| {
                    let (s, o, lambda) = at_moneyness(&HedgeScheme::bs(d), &opt, 1.0, m);
                    lambda * accumulate_cost(&s, &o, &mp, &b, 1.0).unwrap().stdev
                })
                .sum::<f64>()
                / 2.0;
            assert_relative_eq!(v, direct, max_relative = 1e-9);
        }
        assert!(!res.multiple_minima);
        assert!(res.curve.iter().all(|(_, v)| *v >= res.objective - 1e-15));
    }

    #[test]
    fn moneyness_case_equals_scaled_paths() {
        let b = batch(-0.5, 8);
        let opt = OptionSpec::call(1.0, 1.0);
        let mp = MarketParams::black_scholes(0.5);
        let m = 1.2;
        let (s, o, lambda) = at_moneyness(&HedgeScheme::hw(-0.01), &opt, 1.0, m);
        let case = accumulate_cost(&s, &o, &mp, &b, 1.0).unwrap();
        let mut scaled = b.clone();
        scaled.x.iter_mut().for_each(|x| *x *= m);
        scaled.x0 = m;
        let direct = accumulate_cost(&HedgeScheme::hw(-0.01), &opt, &mp, &scaled, 1.0).unwrap();
        for (c, d) in case.costs.iter().zip(&direct.costs) {
            assert_relative_eq!(lambda * c, *d, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn custom_deltas_follow_the_moneyness_mapping() {
        let b = batch(-0.5, 9);
        let opt = OptionSpec::call(1.0, 1.0);
        let mp = MarketParams::black_scholes(0.5);
        let m = 0.9;
        let mut scaled = b.clone();
        scaled.x.iter_mut().for_each(|x| *x *= m);
        scaled.x0 = m;
        let f = |_t: f64, x: f64| (x - 0.5).clamp(0.0, 1.0);
        let table = DeltaTable {
            times: vec![0.0, 1.0],
            spots: vec![0.5, 1.0, 1.5],
            values: vec![vec![0.0, 0.5, 1.0], vec![0.1, 0.6, 0.9]],
        };
        for scheme in [HedgeScheme::custom_fn(f), HedgeScheme::custom_table(table)] {
            let (s, o, lambda) = at_moneyness(&scheme, &opt, 1.0, m);
            let case = accumulate_cost(&s, &o, &mp, &b, 1.0).unwrap();
            let direct = accumulate_cost(&scheme, &opt, &mp, &scaled, 1.0).unwrap();
            for (c, d) in case.costs.iter().zip(&direct.costs) {
                assert_relative_eq!(lambda * c, *d, max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn no_leverage_gives_near_zero_dcal() {
        let b = batch(0.0, 6);
        let opt = OptionSpec::call(1.0, 1.0);
        let mp = MarketParams::black_scholes(0.5);
        for kind in [SchemeKind::BS, SchemeKind::HW] {
            let res = calibrate_dcal(kind, &opt, &mp, &b, &DcalSearch::default()).unwrap();
            assert!(res.dcal.abs() < 0.005, "{kind}: {}", res.dcal);
        }
    }

    #[test]
    fn deterministic_and_rejects_other_kinds() {
        let b = batch(-0.5, 7);
        let opt = OptionSpec::call(1.0, 1.0);
        let mp = MarketParams::black_scholes(0.5);
        let s = DcalSearch { grid_points: 21, ..Default::default() };
        let a = calibrate_dcal(SchemeKind::HW, &opt, &mp, &b, &s).unwrap();
        let c = calibrate_dcal(SchemeKind::HW, &opt, &mp, &b, &s).unwrap();
        assert_eq!(a, c);
        assert!(calibrate_dcal(SchemeKind::H, &opt, &mp, &b, &s).is_err());
    }
}
