//! Correlated (price, volatility) paths under zero rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{GridSpec, VolModel};
use super::sampler::{FactorSampler, SamplerMethod, Scratch};
use super::VolsimError;
use crate::mathkit::rng_stream;

/// Anything that can hand out market paths one at a time.
///
/// `map_paths` must be deterministic: the same index always sees the same
/// path, regardless of the number of worker threads.
pub trait PathSource: Sync {
    fn n_paths(&self) -> usize;
    fn grid(&self) -> &GridSpec;
    fn x0(&self) -> f64;
    fn seed(&self) -> u64;

    /// Applies `f(index, x, sigma)` to every path and returns the results in
    /// path order.
    fn map_paths<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &[f64], &[f64]) -> T + Sync;
}

/// Generates paths on demand without storing them.
pub struct MarketSimulator {
    model: VolModel,
    grid: GridSpec,
    x0: f64,
    n_paths: usize,
    seed: u64,
    sampler: FactorSampler,
}

struct Work {
    factor: Scratch,
    z: [Vec<f64>; 2],
    dw: [Vec<f64>; 2],
    x: [Vec<f64>; 2],
    sigma: [Vec<f64>; 2],
}

impl MarketSimulator {
    pub fn new(model: VolModel, grid: GridSpec, x0: f64, n_paths: usize, seed: u64) -> Result<Self, VolsimError> {
        model.validate()?;
        grid.validate()?;
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(VolsimError::invalid(format!("x0 must be > 0, got {x0}")));
        }
        if n_paths == 0 {
            return Err(VolsimError::invalid("n_paths must be positive"));
        }
        let sampler = FactorSampler::new(&model.kernel, model.sigma_z, &grid)?;
        Ok(Self {
            model,
            grid,
            x0,
            n_paths,
            seed,
            sampler,
        })
    }

    pub fn method(&self) -> SamplerMethod {
        self.sampler.method()
    }

    pub fn model(&self) -> &VolModel {
        &self.model
    }

    fn work(&self) -> Work {
        let n = self.grid.steps;
        let v = |len| [vec![0.0; len], vec![0.0; len]];
        Work {
            factor: self.sampler.scratch(),
            z: v(n + 1),
            dw: v(n),
            x: v(n + 1),
            sigma: v(n + 1),
        }
    }

    /// Simulates path `2·pair` and, when it exists, `2·pair + 1`.
    fn simulate_pair(&self, pair: usize, w: &mut Work) -> usize {
        let first = 2 * pair;
        let count = if first + 1 < self.n_paths { 2 } else { 1 };
        let mut r0 = rng_stream(self.seed, first as u64);
        let mut r1 = rng_stream(self.seed, first as u64 + 1);
        {
            let [z0, z1] = &mut w.z;
            let [d0, d1] = &mut w.dw;
            if count == 2 {
                self.sampler.sample_pair([&mut r0, &mut r1], &mut w.factor, [z0, z1], [d0, d1]);
            } else {
                self.sampler.sample(&mut r0, &mut w.factor, z0, d0);
            }
        }
        let rho = self.model.rho;
        let rho_perp = (1.0 - rho * rho).max(0.0).sqrt();
        let dt = self.grid.dt();
        let sqrt_dt = dt.sqrt();
        for (i, rng) in [&mut r0, &mut r1].into_iter().enumerate().take(count) {
            let (z, dw) = (&w.z[i], &w.dw[i]);
            let (x, sigma) = (&mut w.x[i], &mut w.sigma[i]);
            let mut log_x = self.x0.ln();
            x[0] = self.x0;
            for k in 0..self.grid.steps {
                let s = self.model.vol(z[k]);
                sigma[k] = s;
                let dw_star = rho * dw[k] + rho_perp * sqrt_dt * rng.next_normal();
                log_x += s * dw_star - 0.5 * s * s * dt;
                x[k + 1] = log_x.exp();
            }
            sigma[self.grid.steps] = self.model.vol(z[self.grid.steps]);
        }
        count
    }

    /// Materializes every path.
    pub fn collect(&self) -> PathBatch {
        let n = self.grid.steps;
        let mut x = vec![0.0; self.n_paths * (n + 1)];
        let mut sigma = vec![0.0; self.n_paths * (n + 1)];
        x.par_chunks_mut(2 * (n + 1))
            .zip(sigma.par_chunks_mut(2 * (n + 1)))
            .enumerate()
            .for_each_init(
                || self.work(),
                |w, (pair, (xc, sc))| {
                    let count = self.simulate_pair(pair, w);
                    for i in 0..count {
                        xc[i * (n + 1)..(i + 1) * (n + 1)].copy_from_slice(&w.x[i]);
                        sc[i * (n + 1)..(i + 1) * (n + 1)].copy_from_slice(&w.sigma[i]);
                    }
                },
            );
        PathBatch {
            grid: self.grid,
            n_paths: self.n_paths,
            x,
            sigma,
            seed: self.seed,
            x0: self.x0,
            model_hash: self.model.hash_hex(),
            method: self.method(),
        }
    }
}

impl PathSource for MarketSimulator {
    fn n_paths(&self) -> usize {
        self.n_paths
    }

    fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn x0(&self) -> f64 {
        self.x0
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn map_paths<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &[f64], &[f64]) -> T + Sync,
    {
        let pairs = self.n_paths.div_ceil(2);
        let nested: Vec<Vec<T>> = (0..pairs)
            .into_par_iter()
            .map_init(
                || self.work(),
                |w, pair| {
                    let count = self.simulate_pair(pair, w);
                    (0..count).map(|i| f(2 * pair + i, &w.x[i], &w.sigma[i])).collect()
                },
            )
            .collect();
        nested.into_iter().flatten().collect()
    }
}

/// Stored paths: `x` and `sigma` are `n_paths × (steps + 1)`, path-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathBatch {
    pub grid: GridSpec,
    pub n_paths: usize,
    pub x: Vec<f64>,
    pub sigma: Vec<f64>,
    pub seed: u64,
    pub x0: f64,
    pub model_hash: String,
    pub method: SamplerMethod,
}

impl PathBatch {
    pub fn width(&self) -> usize {
        self.grid.steps + 1
    }

    pub fn x_path(&self, i: usize) -> &[f64] {
        &self.x[i * self.width()..(i + 1) * self.width()]
    }

    pub fn sigma_path(&self, i: usize) -> &[f64] {
        &self.sigma[i * self.width()..(i + 1) * self.width()]
    }
}

impl PathSource for PathBatch {
    fn n_paths(&self) -> usize {
        self.n_paths
    }

    fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn x0(&self) -> f64 {
        self.x0
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn map_paths<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &[f64], &[f64]) -> T + Sync,
    {
        (0..self.n_paths)
            .into_par_iter()
            .map(|i| f(i, self.x_path(i), self.sigma_path(i)))
            .collect()
    }
}

/// Simulates `n_paths` market paths starting at `x0`.
pub fn simulate_market(
    model: &VolModel,
    grid: &GridSpec,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathBatch, VolsimError> {
    Ok(MarketSimulator::new(*model, *grid, x0, n_paths, seed)?.collect())
}
