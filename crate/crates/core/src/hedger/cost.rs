use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scheme::Prepared;
use super::summary::mean_stdev;
use super::{HedgeScheme, HedgerError, SchemeKind};
use crate::pricer::{bs_price, corrected_price, MarketParams, OptionSpec};
use crate::volsim::PathSource;

/// How the position is valued when the hedge stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkConvention {
    /// Held to expiry: the payoff.
    Payoff,
    /// Early exercise at the Black-Scholes price `Q⁽⁰⁾(t, X_t; σ̄)`.
    BlackScholes,
    /// Early exercise at the corrected price `P(t, X_t)`.
    Corrected,
}

/// One hedging experiment to run on a set of paths.
#[derive(Clone, Debug)]
pub struct CostTask {
    pub scheme: HedgeScheme,
    pub opt: OptionSpec,
    pub exercise_time: f64,
    /// Rebalance every `stride` grid steps.
    pub stride: usize,
}

impl CostTask {
    pub fn new(scheme: HedgeScheme, opt: OptionSpec, exercise_time: f64) -> Self {
        Self { scheme, opt, exercise_time, stride: 1 }
    }
}

#[derive(Clone, Debug)]
pub struct HedgeOutcome {
    pub scheme: HedgeScheme,
    pub strike: f64,
    pub exercise_time: f64,
    pub mark: MarkConvention,
    /// `E₀`: `P(0, X₀)` for H̃/HW/BS/custom, `Q⁽⁰⁾(0, X₀)` for H.
    pub initiation_value: f64,
    /// `P(0, X₀)`, the origin of `Y = E − P(0, X₀)` for every scheme.
    pub reference_value: f64,
    /// Per-path `E`, in path order.
    pub costs: Vec<f64>,
    pub mean: f64,
    pub stdev: f64,
    pub stderr: f64,
    pub seed: u64,
    pub stride: usize,
}

/// The JSON form of an outcome, without the per-path costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HedgeSummary {
    pub scheme: SchemeKind,
    pub dcal: f64,
    pub strike: f64,
    pub exercise_time: f64,
    pub mark: MarkConvention,
    pub initiation_value: f64,
    pub reference_value: f64,
    pub mean: f64,
    pub mean_y: f64,
    pub stdev: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub rebalance_stride: usize,
}

impl HedgeOutcome {
    pub fn n_paths(&self) -> usize {
        self.costs.len()
    }

    /// `Y = E − P(0, X₀)`, per path.
    pub fn y_values(&self) -> Vec<f64> {
        self.costs.iter().map(|c| c - self.reference_value).collect()
    }

    pub fn mean_y(&self) -> f64 {
        self.mean - self.reference_value
    }

    pub fn summary(&self) -> HedgeSummary {
        HedgeSummary {
            scheme: self.scheme.kind,
            dcal: self.scheme.dcal,
            strike: self.strike,
            exercise_time: self.exercise_time,
            mark: self.mark,
            initiation_value: self.initiation_value,
            reference_value: self.reference_value,
            mean: self.mean,
            mean_y: self.mean_y(),
            stdev: self.stdev,
            stderr: self.stderr,
            n_paths: self.n_paths(),
            seed: self.seed,
            rebalance_stride: self.stride,
        }
    }

    /// The outcome with every money amount multiplied by `lambda`, as when the
    /// spot and strike are both scaled by `lambda`.
    pub fn rescaled(&self, lambda: f64) -> Self {
        Self {
            strike: lambda * self.strike,
            initiation_value: lambda * self.initiation_value,
            reference_value: lambda * self.reference_value,
            costs: self.costs.iter().map(|c| lambda * c).collect(),
            mean: lambda * self.mean,
            stdev: lambda.abs() * self.stdev,
            stderr: lambda.abs() * self.stderr,
            ..self.clone()
        }
    }

    /// Writes `path_id,cost`.
    pub fn write_csv(&self, path: &Path) -> Result<(), HedgerError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["path_id", "cost"])?;
        for (i, c) in self.costs.iter().enumerate() {
            w.write_record([i.to_string(), format!("{c:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Plan<'a> {
    task: &'a CostTask,
    prepared: Prepared<'a>,
    last: usize,
    exercise_time: f64,
    mark: MarkConvention,
    initiation_value: f64,
    reference_value: f64,
}

fn plan<'a, S: PathSource>(task: &'a CostTask, mp: &MarketParams, source: &S) -> Result<Plan<'a>, HedgerError> {
    let prepared = Prepared::new(&task.scheme, &task.opt, mp)?;
    let grid = source.grid();
    let maturity = task.opt.maturity;
    let t = task.exercise_time;
    if !(t > 0.0 && t <= maturity) {
        return Err(HedgerError::Domain { what: "exercise time", value: t });
    }
    if t > grid.maturity * (1.0 + 1e-12) {
        return Err(HedgerError::Invalid(format!("exercise time {t} lies beyond the path horizon {}", grid.maturity)));
    }
    if task.stride == 0 {
        return Err(HedgerError::Invalid("rebalance stride must be ≥ 1".into()));
    }
    let (last, off) = grid.snap(t);
    let snapped = grid.time(last);
    if off {
        log::warn!("exercise time {t} is off the grid; using {snapped}");
    }
    if last == 0 || snapped > maturity * (1.0 + 1e-12) {
        return Err(HedgerError::Domain { what: "exercise time after snapping", value: snapped });
    }
    let at_expiry = (snapped - maturity).abs() <= 1e-12 * maturity;
    let marks_q0 = task.scheme.kind == SchemeKind::H;
    let mark = match (at_expiry, marks_q0) {
        (true, _) => MarkConvention::Payoff,
        (false, true) => MarkConvention::BlackScholes,
        (false, false) => MarkConvention::Corrected,
    };
    let x0 = source.x0();
    let reference_value = corrected_price(&task.opt, mp, 0.0, x0)?;
    let initiation_value = if marks_q0 { bs_price(&task.opt, 0.0, x0, mp.sigma_bar)? } else { reference_value };
    Ok(Plan {
        task,
        prepared,
        last,
        exercise_time: if at_expiry { maturity } else { snapped },
        mark,
        initiation_value,
        reference_value,
    })
}

impl Plan<'_> {
    fn cost(&self, mp: &MarketParams, times: &[f64], x: &[f64]) -> Result<f64, HedgerError> {
        let stride = self.task.stride;
        let mut gains = 0.0;
        let mut delta = 0.0;
        for k in 0..self.last {
            if k % stride == 0 {
                delta = self.prepared.delta(times[k], x[k])?;
            }
            gains += delta * (x[k + 1] - x[k]);
        }
        let xe = x[self.last];
        let opt = &self.task.opt;
        let value = match self.mark {
            MarkConvention::Payoff => opt.payoff(xe),
            MarkConvention::BlackScholes => bs_price(opt, self.exercise_time, xe, mp.sigma_bar)?,
            MarkConvention::Corrected => corrected_price(opt, mp, self.exercise_time, xe)?,
        };
        Ok(value - gains)
    }
}

/// Runs every task on every path in a single pass over `source`.
///
/// All tasks see the same paths, so differences between them are free of
/// sampling noise from the paths themselves.
pub fn accumulate_costs<S: PathSource>(
    tasks: &[CostTask],
    mp: &MarketParams,
    source: &S,
) -> Result<Vec<HedgeOutcome>, HedgerError> {
    let plans = tasks.iter().map(|t| plan(t, mp, source)).collect::<Result<Vec<_>, _>>()?;
    let grid = *source.grid();
    let times: Vec<f64> = (0..=grid.steps).map(|k| grid.time(k)).collect();
    let per_path = source.map_paths(|_, x, _| plans.iter().map(|p| p.cost(mp, &times, x)).collect::<Result<Vec<f64>, _>>());
    let n = per_path.len();
    let mut columns = vec![Vec::with_capacity(n); plans.len()];
    for row in per_path {
        for (col, c) in columns.iter_mut().zip(row?) {
            col.push(c);
        }
    }
    Ok(plans
        .iter()
        .zip(columns)
        .map(|(p, costs)| {
            let (mean, stdev) = mean_stdev(&costs);
            HedgeOutcome {
                scheme: p.task.scheme.clone(),
                strike: p.task.opt.strike,
                exercise_time: p.exercise_time,
                mark: p.mark,
                initiation_value: p.initiation_value,
                reference_value: p.reference_value,
                stderr: stdev / (costs.len() as f64).sqrt(),
                costs,
                mean,
                stdev,
                seed: source.seed(),
                stride: p.task.stride,
            }
        })
        .collect())
}

/// Hedging cost `E = V − Σ δ(t_k, X_k)(X_{k+1} − X_k)` of one scheme on every path.
pub fn accumulate_cost<S: PathSource>(
    scheme: &HedgeScheme,
    opt: &OptionSpec,
    mp: &MarketParams,
    source: &S,
    exercise_time: f64,
) -> Result<HedgeOutcome, HedgerError> {
    let task = CostTask::new(scheme.clone(), opt.clone(), exercise_time);
    Ok(accumulate_costs(std::slice::from_ref(&task), mp, source)?.remove(0))
}

/// `stdev(E) / Q⁽⁰⁾(0, x₀; σ̄)`.
pub fn relative_risk(outcome: &HedgeOutcome, opt: &OptionSpec, mp: &MarketParams, x0: f64) -> Result<f64, HedgerError> {
    let price = bs_price(opt, 0.0, x0, mp.sigma_bar)?;
    if !(price > 0.0 && price.is_finite()) {
        return Err(HedgerError::ZeroDenominator(price));
    }
    Ok(outcome.stdev / price)
}
