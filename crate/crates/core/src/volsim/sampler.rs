//! Stationary samplers for the volatility factor `Z^ε`.
//!
//! * `OuExact`: exact AR(1) recursion for the Markov kernel, with the exact
//!   joint law of the cell's Brownian increment and stochastic integral.
//! * `MovingAverage`: discretized kernel convolved (by FFT) with i.i.d.
//!   Brownian increments, including a burn-in history. The most recent cell
//!   is integrated exactly; older cells use the cell average of the kernel.
//! * `Circulant`: circulant embedding of the exact covariance. It exposes no
//!   Brownian increments, so it only serves uncorrelated (ρ = 0) runs and as
//!   a covariance oracle.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::kernel::{covariance_cz, kernel_sq_integral, KernelFn, KernelSpec};
use super::model::GridSpec;
use super::VolsimError;
use crate::mathkit::{rng_stream, NormalStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    OuExact,
    MovingAverage,
    Circulant,
}

/// Which sampler [`sample_factor_paths`] should try.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerChoice {
    /// Exact recursion for the Markov kernel, moving average otherwise.
    /// Always returns the driving increments.
    Leverage,
    /// Circulant embedding, falling back to the moving average when the
    /// embedding is not positive semi-definite.
    Circulant,
}

const MAX_FFT_LEN: usize = 1 << 26;

fn fft_len(n: usize) -> Result<usize, VolsimError> {
    let m = n.checked_next_power_of_two().ok_or(VolsimError::FftLength(n))?;
    if m > MAX_FFT_LEN {
        return Err(VolsimError::FftLength(n));
    }
    Ok(m)
}

#[derive(Clone)]
struct MovingAverage {
    history: usize,
    len: usize,
    spectrum: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

#[derive(Clone)]
enum Engine {
    Ou { decay: f64 },
    Ma(MovingAverage),
}

/// Reusable per-worker buffers.
#[derive(Default)]
pub struct Scratch {
    buf: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
    xi: [Vec<f64>; 2],
}

/// Sampler of `Z^ε` together with the Brownian increments `ΔW` that drive it.
#[derive(Clone)]
pub struct FactorSampler {
    sigma_z: f64,
    steps: usize,
    sqrt_dt: f64,
    /// Loading of the most recent cell integral on its own `ΔW/√dt`.
    b_recent: f64,
    /// Standard deviation of the part of that integral orthogonal to `ΔW`.
    s_recent: f64,
    engine: Engine,
}

impl FactorSampler {
    pub fn new(spec: &KernelSpec, sigma_z: f64, grid: &GridSpec) -> Result<Self, VolsimError> {
        spec.validate()?;
        grid.validate()?;
        grid.check_resolution(spec.epsilon);
        let n = grid.steps;
        let dt = grid.dt();
        let h = dt / spec.epsilon;
        let k = KernelFn::new(spec);
        let m_h = k.integral(h);
        let b_recent = m_h / h.sqrt();
        let v_h = kernel_sq_integral(spec, h)?;
        let s_recent = (v_h - b_recent * b_recent).max(0.0).sqrt();
        let engine = if spec.is_markov() {
            Engine::Ou { decay: (-h).exp() }
        } else {
            let history = ((grid.burn_in / h).ceil() as usize).max(1);
            let len = fft_len(history + n + 1)?;
            let mut weights = vec![Complex::new(0.0, 0.0); len];
            let mut prev = m_h;
            for (lag, w) in weights.iter_mut().enumerate().take(history + 1).skip(2) {
                let cur = k.integral(lag as f64 * h);
                w.re = (cur - prev) / h.sqrt();
                prev = cur;
            }
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(len);
            let inverse = planner.plan_fft_inverse(len);
            forward.process(&mut weights);
            let scale = 1.0 / len as f64;
            for w in &mut weights {
                *w *= scale;
            }
            Engine::Ma(MovingAverage {
                history,
                len,
                spectrum: weights,
                forward,
                inverse,
            })
        };
        Ok(Self {
            sigma_z,
            steps: n,
            sqrt_dt: dt.sqrt(),
            b_recent,
            s_recent,
            engine,
        })
    }

    pub fn method(&self) -> SamplerMethod {
        match self.engine {
            Engine::Ou { .. } => SamplerMethod::OuExact,
            Engine::Ma(_) => SamplerMethod::MovingAverage,
        }
    }

    /// Number of burn-in cells of the moving-average sampler.
    pub fn history(&self) -> usize {
        match &self.engine {
            Engine::Ou { .. } => 0,
            Engine::Ma(ma) => ma.history,
        }
    }

    /// Model variance of the discretized factor divided by `σ_z²`.
    pub fn discrete_variance(&self) -> f64 {
        match &self.engine {
            Engine::Ou { .. } => 1.0,
            Engine::Ma(ma) => {
                let mut spec = ma.spectrum.clone();
                ma.inverse.process(&mut spec);
                let tail: f64 = spec.iter().map(|w| w.re * w.re).sum();
                self.b_recent.powi(2) + self.s_recent.powi(2) + tail
            }
        }
    }

    pub fn scratch(&self) -> Scratch {
        let mut s = Scratch::default();
        if let Engine::Ma(ma) = &self.engine {
            s.buf = vec![Complex::new(0.0, 0.0); ma.len];
            s.fft = vec![Complex::new(0.0, 0.0); ma.forward.get_inplace_scratch_len()];
        }
        s
    }

    /// Fills `z` (`steps + 1` values) and `dw` (`steps` Brownian increments)
    /// from the normal draws of `rng`.
    pub fn sample(&self, rng: &mut NormalStream, ws: &mut Scratch, z: &mut [f64], dw: &mut [f64]) {
        match &self.engine {
            Engine::Ou { decay } => self.sample_ou(*decay, rng, z, dw),
            Engine::Ma(ma) => self.sample_ma(ma, [Some(rng), None], ws, [z, &mut []], [dw, &mut []]),
        }
    }

    /// Two independent paths; the moving average packs them into one complex
    /// FFT. Each path uses only the draws of its own stream.
    pub fn sample_pair(
        &self,
        rngs: [&mut NormalStream; 2],
        ws: &mut Scratch,
        z: [&mut [f64]; 2],
        dw: [&mut [f64]; 2],
    ) {
        match &self.engine {
            Engine::Ou { decay } => {
                let [r0, r1] = rngs;
                let [z0, z1] = z;
                let [d0, d1] = dw;
                self.sample_ou(*decay, r0, z0, d0);
                self.sample_ou(*decay, r1, z1, d1);
            }
            Engine::Ma(ma) => {
                let [r0, r1] = rngs;
                self.sample_ma(ma, [Some(r0), Some(r1)], ws, z, dw)
            }
        }
    }

    fn sample_ou(&self, decay: f64, rng: &mut NormalStream, z: &mut [f64], dw: &mut [f64]) {
        let n = self.steps;
        debug_assert!(z.len() == n + 1 && dw.len() == n);
        let mut zk = rng.next_normal();
        z[0] = self.sigma_z * zk;
        for k in 0..n {
            let xi = rng.next_normal();
            let eta = rng.next_normal();
            dw[k] = self.sqrt_dt * xi;
            zk = decay * zk + self.b_recent * xi + self.s_recent * eta;
            z[k + 1] = self.sigma_z * zk;
        }
    }

    fn sample_ma(
        &self,
        ma: &MovingAverage,
        rngs: [Option<&mut NormalStream>; 2],
        ws: &mut Scratch,
        z: [&mut [f64]; 2],
        dw: [&mut [f64]; 2],
    ) {
        let n = self.steps;
        let l = ma.history;
        let cells = l + n;
        for w in ws.buf.iter_mut() {
            *w = Complex::new(0.0, 0.0);
        }
        let mut etas: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (i, rng) in rngs.into_iter().enumerate() {
            let Some(rng) = rng else { continue };
            let xi = &mut ws.xi[i];
            xi.resize(cells, 0.0);
            rng.fill(xi);
            for (q, v) in xi.iter().enumerate() {
                if i == 0 {
                    ws.buf[q].re = *v;
                } else {
                    ws.buf[q].im = *v;
                }
            }
            etas[i] = (0..=n).map(|_| rng.next_normal()).collect();
        }
        ma.forward.process_with_scratch(&mut ws.buf, &mut ws.fft);
        for (b, w) in ws.buf.iter_mut().zip(&ma.spectrum) {
            *b *= w;
        }
        ma.inverse.process_with_scratch(&mut ws.buf, &mut ws.fft);
        for (i, (zi, dwi)) in z.into_iter().zip(dw).enumerate() {
            if etas[i].is_empty() {
                continue;
            }
            let xi = &ws.xi[i];
            for k in 0..=n {
                let conv = if i == 0 { ws.buf[k + l].re } else { ws.buf[k + l].im };
                let recent = self.b_recent * xi[k + l - 1] + self.s_recent * etas[i][k];
                zi[k] = self.sigma_z * (recent + conv);
            }
            for k in 0..n {
                dwi[k] = self.sqrt_dt * xi[l + k];
            }
        }
    }
}

/// Circulant embedding of the stationary covariance on the time grid.
pub struct CirculantSampler {
    steps: usize,
    len: usize,
    sqrt_eigen: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl CirculantSampler {
    pub fn new(spec: &KernelSpec, sigma_z: f64, grid: &GridSpec) -> Result<Self, VolsimError> {
        spec.validate()?;
        grid.validate()?;
        let n = grid.steps;
        let h = grid.dt() / spec.epsilon;
        let len = fft_len(2 * n)?;
        let half = len / 2;
        let mut row = vec![Complex::new(0.0, 0.0); len];
        for j in 0..=half {
            let c = sigma_z * sigma_z * covariance_cz(spec, j as f64 * h)?;
            row[j].re = c;
            if j > 0 && j < half {
                row[len - j].re = c;
            }
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        fft.process(&mut row);
        let max = row.iter().map(|c| c.re).fold(f64::MIN, f64::max);
        let min = row.iter().map(|c| c.re).fold(f64::MAX, f64::min);
        if min < -1e-10 * max {
            return Err(VolsimError::NotPositiveDefinite { min_eigenvalue: min / max });
        }
        let sqrt_eigen = row.iter().map(|c| (c.re.max(0.0) / len as f64).sqrt()).collect();
        Ok(Self {
            steps: n,
            len,
            sqrt_eigen,
            fft,
        })
    }

    /// Two independent paths (real and imaginary parts) of `steps + 1` values.
    pub fn sample_pair(&self, rng: &mut NormalStream, out: [&mut [f64]; 2]) {
        let mut buf: Vec<Complex<f64>> = self
            .sqrt_eigen
            .iter()
            .map(|s| {
                let re = rng.next_normal();
                let im = rng.next_normal();
                Complex::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        let [a, b] = out;
        for k in 0..=self.steps {
            a[k] = buf[k].re;
            if !b.is_empty() {
                b[k] = buf[k].im;
            }
        }
        debug_assert!(buf.len() == self.len);
    }
}

/// Factor paths, path-major, with the increments that drove them when the
/// sampler exposes them.
#[derive(Clone, Debug)]
pub struct FactorPaths {
    pub n_paths: usize,
    pub steps: usize,
    pub z: Vec<f64>,
    pub dw: Option<Vec<f64>>,
    pub method: SamplerMethod,
}

impl FactorPaths {
    pub fn path(&self, i: usize) -> &[f64] {
        &self.z[i * (self.steps + 1)..(i + 1) * (self.steps + 1)]
    }

    pub fn increments(&self, i: usize) -> Option<&[f64]> {
        self.dw.as_ref().map(|d| &d[i * self.steps..(i + 1) * self.steps])
    }
}

fn sample_leverage(
    spec: &KernelSpec,
    sigma_z: f64,
    grid: &GridSpec,
    n_paths: usize,
    seed: u64,
) -> Result<FactorPaths, VolsimError> {
    let sampler = FactorSampler::new(spec, sigma_z, grid)?;
    let n = grid.steps;
    let mut z = vec![0.0; n_paths * (n + 1)];
    let mut dw = vec![0.0; n_paths * n];
    z.par_chunks_mut(2 * (n + 1))
        .zip(dw.par_chunks_mut(2 * n))
        .enumerate()
        .for_each_init(
            || sampler.scratch(),
            |ws, (pair, (zc, dc))| {
                let first = 2 * pair as u64;
                let (z0, z1) = zc.split_at_mut(n + 1);
                let (d0, d1) = dc.split_at_mut(n);
                let mut r0 = rng_stream(seed, first);
                if z1.is_empty() {
                    sampler.sample(&mut r0, ws, z0, d0);
                } else {
                    let mut r1 = rng_stream(seed, first + 1);
                    sampler.sample_pair([&mut r0, &mut r1], ws, [z0, z1], [d0, d1]);
                }
            },
        );
    Ok(FactorPaths {
        n_paths,
        steps: n,
        z,
        dw: Some(dw),
        method: sampler.method(),
    })
}

/// Samples `n_paths` stationary factor paths on `grid`.
pub fn sample_factor_paths(
    spec: &KernelSpec,
    sigma_z: f64,
    grid: &GridSpec,
    n_paths: usize,
    seed: u64,
    choice: SamplerChoice,
) -> Result<FactorPaths, VolsimError> {
    if n_paths == 0 {
        return Err(VolsimError::invalid("n_paths must be positive"));
    }
    if !(sigma_z > 0.0) {
        return Err(VolsimError::invalid(format!("sigma_z must be > 0, got {sigma_z}")));
    }
    match choice {
        SamplerChoice::Leverage => sample_leverage(spec, sigma_z, grid, n_paths, seed),
        SamplerChoice::Circulant => match CirculantSampler::new(spec, sigma_z, grid) {
            Ok(circ) => {
                let n = grid.steps;
                let mut z = vec![0.0; n_paths * (n + 1)];
                z.par_chunks_mut(2 * (n + 1)).enumerate().for_each(|(pair, zc)| {
                    let mut rng = rng_stream(seed, pair as u64);
                    let (a, b) = zc.split_at_mut(n + 1);
                    circ.sample_pair(&mut rng, [a, b]);
                });
                Ok(FactorPaths {
                    n_paths,
                    steps: n,
                    z,
                    dw: None,
                    method: SamplerMethod::Circulant,
                })
            }
            Err(VolsimError::NotPositiveDefinite { min_eigenvalue }) => {
                log::warn!(
                    "circulant embedding not positive definite (min eigenvalue ratio {min_eigenvalue:e}); using the moving average"
                );
                sample_leverage(spec, sigma_z, grid, n_paths, seed)
            }
            Err(e) => Err(e),
        },
    }
}
