//! Experiment configuration: parsing, validation and hashing.

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use roughhedge::hedger::{DcalSearch, HedgeScheme};
use roughhedge::pricer::OptionSpec;
use roughhedge::volsim::{GridSpec, VolModel};

pub const SCHEMA_VERSION: u32 = 1;

/// The JSON schema shipped with the binary.
pub const SCHEMA: &str = include_str!("../schema/experiment.schema.json");

fn default_x0() -> f64 {
    1.0
}

fn default_n_paths() -> usize {
    10_000
}

fn default_moneyness() -> Vec<f64> {
    vec![0.8, 0.9, 1.0, 1.1, 1.2]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_stride() -> usize {
    1
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Grids for the surface command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceGrids {
    /// Relative exercise times `t/T`.
    pub theta: Vec<f64>,
    pub d_minus: Vec<f64>,
    /// Total variances `σ̄²(T − t)` for the normalized standard deviation.
    pub tau: Vec<f64>,
    /// `x/K` for the normalized standard deviation.
    pub moneyness: Vec<f64>,
}

impl Default for SurfaceGrids {
    fn default() -> Self {
        Self {
            theta: linspace(0.0, 1.0, 21),
            d_minus: linspace(-3.0, 3.0, 61),
            tau: linspace(0.05, 1.0, 20),
            moneyness: linspace(0.5, 1.5, 21),
        }
    }
}

/// Search settings for the calibration command; the moneyness grid comes from
/// the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSearch {
    pub lower: f64,
    pub upper: f64,
    pub grid_points: usize,
    pub tolerance: f64,
}

impl Default for CalibrationSearch {
    fn default() -> Self {
        let d = DcalSearch::default();
        Self { lower: d.lower, upper: d.upper, grid_points: d.grid_points, tolerance: d.tolerance }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: VolModel,
    pub grid: GridSpec,
    pub option: OptionSpec,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default)]
    pub schemes: Vec<HedgeScheme>,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_moneyness")]
    pub moneyness_grid: Vec<f64>,
    /// Empty means the option maturity.
    #[serde(default)]
    pub exercise_times: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_stride")]
    pub rebalance_stride: usize,
    #[serde(default)]
    pub surfaces: SurfaceGrids,
    #[serde(default)]
    pub calibration: CalibrationSearch,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("parsing configuration")?;
        Ok(cfg)
    }

    pub fn exercise_times(&self) -> Vec<f64> {
        if self.exercise_times.is_empty() {
            vec![self.option.maturity]
        } else {
            self.exercise_times.clone()
        }
    }

    pub fn search(&self) -> DcalSearch {
        DcalSearch {
            moneyness: self.moneyness_grid.clone(),
            lower: self.calibration.lower,
            upper: self.calibration.upper,
            grid_points: self.calibration.grid_points,
            tolerance: self.calibration.tolerance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.schema_version == SCHEMA_VERSION,
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            self.schema_version
        );
        self.model.validate()?;
        self.grid.validate()?;
        self.option.validate()?;
        let t = self.option.maturity;
        ensure!(
            (self.grid.maturity - t).abs() <= 1e-12 * t,
            "grid maturity {} differs from option maturity {t}",
            self.grid.maturity
        );
        ensure!(self.x0 > 0.0 && self.x0.is_finite(), "x0 must be > 0");
        ensure!(self.n_paths > 0, "n_paths must be positive");
        ensure!(self.rebalance_stride >= 1, "rebalance_stride must be ≥ 1");
        ensure!(!self.moneyness_grid.is_empty(), "moneyness_grid must not be empty");
        if let Some(m) = self.moneyness_grid.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            bail!("moneyness {m} must be > 0");
        }
        if let Some(e) = self.exercise_times().iter().find(|e| !(**e > 0.0 && **e <= t)) {
            bail!("exercise time {e} outside (0, {t}]");
        }
        for s in &self.schemes {
            s.validate()?;
        }
        let g = &self.surfaces;
        if let Some(v) = g.theta.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            bail!("surface theta {v} outside [0, 1]");
        }
        ensure!(g.tau.iter().all(|v| *v > 0.0), "surface tau values must be > 0");
        ensure!(g.moneyness.iter().all(|v| *v > 0.0), "surface moneyness values must be > 0");
        ensure!(g.d_minus.iter().all(|v| v.is_finite()), "surface d_minus values must be finite");
        Ok(())
    }

    /// SHA-256 of the canonical JSON with the output directory cleared, so
    /// that moving the outputs does not change the experiment identity.
    pub fn hash_hex(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
