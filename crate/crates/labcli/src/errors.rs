//! Mapping of failures to exit codes: 2 for invalid input, 3 for numerical
//! failures, 1 for everything else (mostly IO).

use std::fmt;

use roughhedge::asymptotics::AsymptoticsError;
use roughhedge::hedger::HedgerError;
use roughhedge::mathkit::MathError;
use roughhedge::pricer::PricerError;
use roughhedge::volsim::VolsimError;

pub const VALIDATION: u8 = 2;
pub const NUMERICAL: u8 = 3;
pub const OTHER: u8 = 1;

/// Marks an error as a validation failure.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(Invalid(format!("{e:#}")))
}

fn math(e: &MathError) -> u8 {
    match e {
        MathError::InvalidSpec(_) => VALIDATION,
        _ => NUMERICAL,
    }
}

fn pricer(e: &PricerError) -> u8 {
    match e {
        PricerError::Domain { .. } | PricerError::Invalid(_) => VALIDATION,
        PricerError::Math(m) => math(m),
        _ => NUMERICAL,
    }
}

fn volsim(e: &VolsimError) -> u8 {
    match e {
        VolsimError::Invalid(_) => VALIDATION,
        VolsimError::Math(m) => math(m),
        VolsimError::Io(_) | VolsimError::Format(_) => OTHER,
        _ => NUMERICAL,
    }
}

fn hedger(e: &HedgerError) -> u8 {
    match e {
        HedgerError::Pricer(p) => pricer(p),
        HedgerError::Volsim(v) => volsim(v),
        HedgerError::Domain { .. } | HedgerError::Invalid(_) => VALIDATION,
        HedgerError::NonFiniteDelta { .. } | HedgerError::ZeroDenominator(_) => NUMERICAL,
        HedgerError::Io(_) | HedgerError::Csv(_) => OTHER,
    }
}

fn asymptotics(e: &AsymptoticsError) -> u8 {
    match e {
        AsymptoticsError::Math(m) => math(m),
        AsymptoticsError::Volsim(v) => volsim(v),
        AsymptoticsError::Pricer(p) => pricer(p),
        AsymptoticsError::Invalid(_) | AsymptoticsError::Unsupported(_) => VALIDATION,
        AsymptoticsError::Io(_) | AsymptoticsError::Csv(_) => OTHER,
        _ => NUMERICAL,
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<HedgerError>() {
            return hedger(e);
        }
        if let Some(e) = cause.downcast_ref::<AsymptoticsError>() {
            return asymptotics(e);
        }
        if let Some(e) = cause.downcast_ref::<VolsimError>() {
            return volsim(e);
        }
        if let Some(e) = cause.downcast_ref::<PricerError>() {
            return pricer(e);
        }
        if let Some(e) = cause.downcast_ref::<MathError>() {
            return math(e);
        }
    }
    OTHER
}
