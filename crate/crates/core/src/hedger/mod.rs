//! Delta-hedging schemes and hedging-cost accumulation.

mod calibrate;
mod cost;
mod scheme;
mod summary;

pub use calibrate::{at_moneyness, calibrate_dcal, CalibrationResult, DcalSearch};
pub use cost::{accumulate_cost, accumulate_costs, relative_risk, CostTask, HedgeOutcome, HedgeSummary, MarkConvention};
pub use scheme::{d_param_from_dcal, dcal_from_d_param, delta, CustomDelta, DeltaTable, HedgeScheme};
pub use summary::{joint_stdev_stderr, mean_stdev};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pricer::PricerError;
use crate::volsim::VolsimError;

/// The named hedging schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    H,
    #[serde(rename = "H_tilde")]
    HTilde,
    HW,
    BS,
    #[serde(rename = "custom_da")]
    CustomDa,
}

impl SchemeKind {
    pub fn label(&self) -> &'static str {
        match self {
            SchemeKind::H => "H",
            SchemeKind::HTilde => "H_tilde",
            SchemeKind::HW => "HW",
            SchemeKind::BS => "BS",
            SchemeKind::CustomDa => "custom_da",
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error)]
pub enum HedgerError {
    #[error(transparent)]
    Pricer(#[from] PricerError),
    #[error(transparent)]
    Volsim(#[from] VolsimError),
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("delta is not finite at t = {t}, x = {x}")]
    NonFiniteDelta { t: f64, x: f64 },
    #[error("option price at inception is {0}; relative risk is undefined")]
    ZeroDenominator(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
