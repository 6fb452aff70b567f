use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kernel::KernelSpec;
use super::VolsimError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolMap {
    /// `F(z) = σ̄ exp(ωz/σ_z − ω²)`
    #[default]
    ExpOu,
}

/// Generative model of the volatility `σ_t = F(Z^ε_t)` and its leverage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolModel {
    pub kernel: KernelSpec,
    pub sigma_z: f64,
    #[serde(default)]
    pub map: VolMap,
    pub omega: f64,
    pub sigma_bar: f64,
    pub rho: f64,
}

impl VolModel {
    pub fn validate(&self) -> Result<(), VolsimError> {
        self.kernel.validate()?;
        if !(self.sigma_z > 0.0 && self.sigma_z.is_finite()) {
            return Err(VolsimError::invalid(format!("sigma_z must be > 0, got {}", self.sigma_z)));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(VolsimError::invalid(format!("omega must be ≥ 0, got {}", self.omega)));
        }
        if !(self.sigma_bar > 0.0 && self.sigma_bar.is_finite()) {
            return Err(VolsimError::invalid(format!(
                "sigma_bar must be > 0, got {}",
                self.sigma_bar
            )));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(VolsimError::invalid(format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        Ok(())
    }

    /// Volatility level `F(z)`.
    #[inline]
    pub fn vol(&self, z: f64) -> f64 {
        match self.map {
            VolMap::ExpOu => self.sigma_bar * (self.omega * z / self.sigma_z - self.omega * self.omega).exp(),
        }
    }

    /// `F'(z)`.
    #[inline]
    pub fn vol_prime(&self, z: f64) -> f64 {
        match self.map {
            VolMap::ExpOu => self.omega / self.sigma_z * self.vol(z),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.kernel.epsilon
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        hex_digest(&json)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn default_burn_in() -> f64 {
    50.0
}

/// Uniform time grid on `[0, maturity]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub maturity: f64,
    pub steps: usize,
    /// Stationary history length for the moving-average sampler, in units of ε.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
}

impl GridSpec {
    pub fn new(maturity: f64, steps: usize) -> Self {
        Self {
            maturity,
            steps,
            burn_in: default_burn_in(),
        }
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.maturity
        } else {
            self.maturity * k as f64 / self.steps as f64
        }
    }

    pub fn validate(&self) -> Result<(), VolsimError> {
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(VolsimError::invalid(format!("maturity must be > 0, got {}", self.maturity)));
        }
        if self.steps < 2 {
            return Err(VolsimError::invalid(format!("steps must be ≥ 2, got {}", self.steps)));
        }
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return Err(VolsimError::invalid(format!("burn_in must be ≥ 0, got {}", self.burn_in)));
        }
        Ok(())
    }

    /// Warn when the step does not resolve the factor's decorrelation time.
    pub fn check_resolution(&self, epsilon: f64) -> bool {
        let ok = self.dt() <= epsilon / 4.0;
        if !ok {
            log::warn!(
                "time step {} exceeds epsilon/4 = {}; the volatility factor is under-resolved",
                self.dt(),
                epsilon / 4.0
            );
        }
        ok
    }

    /// Index of the grid point nearest to `t`, and whether `t` was off-grid.
    pub fn snap(&self, t: f64) -> (usize, bool) {
        let x = t / self.dt();
        let k = x.round().clamp(0.0, self.steps as f64) as usize;
        let off = (x - k as f64).abs() > 1e-9 * x.max(1.0);
        (k, off)
    }
}
