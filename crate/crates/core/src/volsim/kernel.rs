//! Moving-average kernels of the volatility factor and their covariances.
//!
//! All functions here work in units of the mean-reversion time: `t` is
//! `time / ε`. The scaled kernel is `𝒦^ε(t) = 𝒦(t/ε)/√ε`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use super::VolsimError;
use crate::mathkit::{gamma, integrate_1d_with_error, Decay, Domain, MathError, QuadSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    StandardOu,
    FractionalOu,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hurst: Option<f64>,
    pub epsilon: f64,
}

/// Switch from the convergent series to the large-argument expansion.
const ASYMPTOTIC_FROM: f64 = 40.0;

impl KernelSpec {
    pub fn standard_ou(epsilon: f64) -> Self {
        Self {
            kind: KernelKind::StandardOu,
            hurst: None,
            epsilon,
        }
    }

    pub fn fractional_ou(hurst: f64, epsilon: f64) -> Self {
        Self {
            kind: KernelKind::FractionalOu,
            hurst: Some(hurst),
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<(), VolsimError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(VolsimError::invalid(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        match (self.kind, self.hurst) {
            (KernelKind::StandardOu, None) => Ok(()),
            (KernelKind::StandardOu, Some(h)) if h == 0.5 => Ok(()),
            (KernelKind::StandardOu, Some(h)) => Err(VolsimError::invalid(format!(
                "standard_ou kernel has H = 1/2, got hurst = {h}"
            ))),
            (KernelKind::FractionalOu, Some(h)) if h > 0.0 && h <= 0.5 => Ok(()),
            (KernelKind::FractionalOu, h) => Err(VolsimError::invalid(format!(
                "fractional_ou needs hurst in (0, 1/2], got {h:?}"
            ))),
        }
    }

    pub fn hurst(&self) -> f64 {
        match self.kind {
            KernelKind::StandardOu => 0.5,
            KernelKind::FractionalOu => self.hurst.unwrap_or(0.5),
        }
    }

    /// True when the kernel is exactly `√2 e^{-t}` and the factor is Markov.
    pub fn is_markov(&self) -> bool {
        self.hurst() == 0.5
    }

    /// Exponent `a = H - 1/2` of the small-time singularity.
    pub fn alpha(&self) -> f64 {
        self.hurst() - 0.5
    }

    /// Normalizing constant `√(2 sin πH)/Γ(H + 1/2)`.
    pub fn constant(&self) -> f64 {
        let h = self.hurst();
        (2.0 * (PI * h).sin()).sqrt() / gamma(h + 0.5)
    }

    /// Envelope of `|𝒦(t)|` at large `t`.
    pub fn decay(&self) -> Decay {
        if self.is_markov() {
            Decay::Exponential(1.0)
        } else {
            Decay::Power(1.5 - self.hurst())
        }
    }

    /// `𝒦^ε(t)` in physical time.
    pub fn eval_scaled(&self, t: f64) -> Result<f64, VolsimError> {
        Ok(kernel_eval(self, t / self.epsilon)? / self.epsilon.sqrt())
    }
}

/// `J(t) = ∫₀^t u^a e^{-(t-u)} du`.
fn j_integral(a: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t > ASYMPTOTIC_FROM {
        // J ~ t^a Σ (-a)_k t^{-k}
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 0..200 {
            let next = term * (-a + k as f64) / t;
            if next.abs() > term.abs() || next == 0.0 {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return t.powf(a) * sum;
    }
    // e^{-t} Σ t^{a+k+1} / (k! (a+k+1))
    let mut pow = 1.0;
    let mut sum = 0.0;
    for k in 0..400 {
        let kf = k as f64;
        if k > 0 {
            pow *= t / kf;
        }
        let add = pow / (a + kf + 1.0);
        sum += add;
        if kf > t && add < 1e-17 * sum {
            break;
        }
    }
    (-t).exp() * t.powf(a + 1.0) * sum
}

/// `𝒦(t)/c = t^a - J(t)`.
fn kernel_shape(a: f64, t: f64) -> f64 {
    if a == 0.0 {
        return (-t).exp();
    }
    if t > ASYMPTOTIC_FROM {
        // -t^a Σ_{k≥1} (-a)_k t^{-k}
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..200 {
            let next = term * (-a + k as f64) / t;
            if k > 0 && next.abs() > term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return -t.powf(a) * sum;
    }
    // e^{-t} t^a [1 + a Σ_{k≥1} t^k / (k! (a+k))]
    let mut pow = 1.0;
    let mut sum = 0.0;
    for k in 1..400 {
        let kf = k as f64;
        pow *= t / kf;
        let add = pow / (a + kf);
        sum += add;
        if kf > t && add < 1e-17 * sum {
            break;
        }
    }
    (-t).exp() * t.powf(a) * (1.0 + a * sum)
}

/// Unit-time kernel `𝒦(t)`.
pub fn kernel_eval(spec: &KernelSpec, t: f64) -> Result<f64, VolsimError> {
    if spec.is_markov() {
        if t < 0.0 || !t.is_finite() {
            return Err(MathError::Domain { function: "kernel_eval", value: t }.into());
        }
        return Ok(SQRT_2 * (-t).exp());
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(MathError::Domain { function: "kernel_eval", value: t }.into());
    }
    Ok(spec.constant() * kernel_shape(spec.alpha(), t))
}

/// Fast evaluation with precomputed constants, for inner loops.
#[derive(Clone, Copy, Debug)]
pub struct KernelFn {
    a: f64,
    c: f64,
    markov: bool,
}

impl KernelFn {
    pub fn new(spec: &KernelSpec) -> Self {
        Self {
            a: spec.alpha(),
            c: spec.constant(),
            markov: spec.is_markov(),
        }
    }

    /// `𝒦(t)` for `t > 0` (no domain check).
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if self.markov {
            SQRT_2 * (-t).exp()
        } else {
            self.c * kernel_shape(self.a, t)
        }
    }

    /// `M(t) = ∫₀^t 𝒦`.
    pub fn integral(&self, t: f64) -> f64 {
        if self.markov {
            SQRT_2 * (-(-t).exp_m1())
        } else {
            self.c * j_integral(self.a, t)
        }
    }

    pub fn alpha(&self) -> f64 {
        self.a
    }
}

/// `∫₀^t 𝒦(u) du`.
pub fn kernel_integral(spec: &KernelSpec, t: f64) -> f64 {
    KernelFn::new(spec).integral(t.max(0.0))
}

/// `∫₀^∞ 𝒦`: `√2` for the Markov kernel and zero when `H < 1/2`.
pub fn kernel_total_integral(spec: &KernelSpec) -> f64 {
    if spec.is_markov() {
        SQRT_2
    } else {
        0.0
    }
}

fn quad_spec() -> QuadSpec {
    QuadSpec::adaptive(1e-14, 1e-12)
}

/// `∫₀^h f(t) dt` for `f ~ t^{2a}` near zero, after `t = u^p`, `p = 1/(2a+1)`,
/// which leaves a bounded integrand.
pub(crate) fn integrate_singular_origin(
    f: impl Fn(f64) -> f64,
    a: f64,
    h: f64,
) -> Result<f64, MathError> {
    if h <= 0.0 {
        return Ok(0.0);
    }
    let p = 1.0 / (2.0 * a + 1.0);
    let top = h.powf(1.0 / p);
    let g = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let t = u.powf(p);
        f(t) * p * t / u
    };
    Ok(integrate_1d_with_error(g, Domain::Interval(0.0, top), &quad_spec())?.value)
}

/// `∫₀^t 𝒦(u)² du`.
pub fn kernel_sq_integral(spec: &KernelSpec, t: f64) -> Result<f64, VolsimError> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    if spec.is_markov() {
        return Ok(-(-2.0 * t).exp_m1());
    }
    let k = KernelFn::new(spec);
    Ok(integrate_singular_origin(|u| k.eval(u).powi(2), spec.alpha(), t)?)
}

/// `∫₀^∞ 𝒦(u)² du` by quadrature (equal to one for a normalized kernel).
pub fn kernel_l2_norm_sq(spec: &KernelSpec) -> Result<f64, VolsimError> {
    let head = kernel_sq_integral(spec, 1.0)?;
    let k = KernelFn::new(spec);
    let decay = match spec.decay() {
        Decay::Power(d) => Decay::Power(2.0 * d),
        Decay::Exponential(r) => Decay::Exponential(2.0 * r),
    };
    let tail = integrate_1d_with_error(
        |u| k.eval(u).powi(2),
        Domain::HalfLine { start: 1.0, decay },
        &QuadSpec::adaptive(1e-13, 1e-12),
    )?;
    Ok(head + tail.value)
}

/// `e^{s} Γ(b, s)` for `b > 0`, `s ≥ 0`.
fn scaled_upper_gamma(b: f64, s: f64) -> f64 {
    if s < b + 1.0 {
        // Γ(b) - γ(b, s), lower part by its power series
        let mut term = 1.0 / b;
        let mut sum = term;
        for k in 1..500 {
            term *= s / (b + k as f64);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        let lower = if s == 0.0 { 0.0 } else { (b * s.ln() - s).exp() * sum };
        s.exp() * (gamma(b) - lower)
    } else {
        // Γ(b, s) = e^{-s} s^b / (s + 1 - b - ...), modified Lentz
        let tiny = 1e-300;
        let mut bb = s + 1.0 - b;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / bb;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - b);
            bb += 2.0;
            d = an * d + bb;
            if d.abs() < tiny {
                d = tiny;
            }
            c = bb + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        s.powf(b) * h
    }
}

/// Autocorrelation `𝒞_Z(s)` of the unit-time factor.
pub fn covariance_cz(spec: &KernelSpec, s: f64) -> Result<f64, VolsimError> {
    if !(s >= 0.0) {
        return Err(MathError::Domain { function: "covariance_cz", value: s }.into());
    }
    if spec.is_markov() {
        return Ok((-s).exp());
    }
    Ok(cz_fractional(spec.hurst(), s))
}

fn cz_fractional(h: f64, s: f64) -> f64 {
    let two_h = 2.0 * h;
    let g = gamma(two_h + 1.0);
    if s == 0.0 {
        return 1.0;
    }
    if s > ASYMPTOTIC_FROM {
        // Σ_{k even ≥ 2} (2H)(2H-1)...(2H-k+1) s^{2H-k} / Γ(2H+1)
        let mut falling = two_h * (two_h - 1.0);
        let mut term = falling * s.powf(two_h - 2.0);
        let mut sum = term;
        let mut k = 2.0;
        loop {
            falling *= (two_h - k) * (two_h - k - 1.0);
            let next = falling * s.powf(two_h - k - 2.0);
            if next.abs() > term.abs() || next.abs() < 1e-17 * sum.abs() {
                break;
            }
            term = next;
            sum += term;
            k += 2.0;
            if k > 200.0 {
                break;
            }
        }
        return sum / g;
    }
    // Γ(2H+1)·𝒞 = ½ e^s Γ(2H+1, s) + ½ e^{-s} Γ(2H+1) + ½ e^{-s}∫₀^s w^{2H} e^w dw - s^{2H}
    let a = scaled_upper_gamma(two_h + 1.0, s);
    let b = (-s).exp() * g + j_integral(two_h, s);
    (0.5 * a + 0.5 * b - s.powf(two_h)) / g
}

/// Overlap `𝒞_𝒦(s, s') = ∫₀^∞ 𝒦(s+v) 𝒦(s'+v) dv`.
pub fn kernel_overlap(spec: &KernelSpec, s: f64, s2: f64) -> Result<f64, VolsimError> {
    if !(s >= 0.0) || !(s2 >= 0.0) {
        return Err(MathError::Domain { function: "kernel_overlap", value: s.min(s2) }.into());
    }
    if spec.is_markov() {
        return Ok((-(s + s2)).exp());
    }
    let lo = s.min(s2);
    let delta = (s - s2).abs();
    let full = cz_fractional(spec.hurst(), delta);
    if lo == 0.0 {
        return Ok(full);
    }
    // 𝒞_𝒦(lo, lo+δ) = 𝒞_Z(δ) - ∫₀^lo 𝒦(u)𝒦(u+δ) du
    let k = KernelFn::new(spec);
    let head = integrate_singular_origin(|u| k.eval(u) * k.eval(u + delta), spec.alpha(), lo)?;
    Ok(full - head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn direct_overlap(spec: &KernelSpec, s: f64, s2: f64) -> f64 {
        // Independent oracle: plain half-line quadrature of the defining integral.
        let k = KernelFn::new(spec);
        let f = |v: f64| k.eval(s + v) * k.eval(s2 + v);
        let near = if s.min(s2) == 0.0 {
            integrate_singular_origin(f, spec.alpha(), 1.0).unwrap()
        } else {
            integrate_1d_with_error(f, Domain::Interval(0.0, 1.0), &QuadSpec::adaptive(1e-14, 1e-13))
                .unwrap()
                .value
        };
        let decay = match spec.decay() {
            Decay::Power(d) => Decay::Power(2.0 * d),
            e => e,
        };
        near + integrate_1d_with_error(f, Domain::HalfLine { start: 1.0, decay }, &QuadSpec::adaptive(1e-14, 1e-13))
            .unwrap()
            .value
    }

    #[test]
    fn ou_kernel_values() {
        let ou = KernelSpec::standard_ou(1.0);
        assert_relative_eq!(kernel_eval(&ou, 0.5).unwrap(), SQRT_2 * (-0.5f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(covariance_cz(&ou, 2.0).unwrap(), (-2.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(kernel_overlap(&ou, 0.3, 1.1).unwrap(), (-1.4f64).exp(), max_relative = 1e-15);
        // the fractional formula with H = 1/2 is the same kernel
        let f = KernelSpec::fractional_ou(0.5, 1.0);
        assert_relative_eq!(kernel_eval(&f, 0.7).unwrap(), SQRT_2 * (-0.7f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn fractional_tends_to_ou() {
        let f = KernelSpec::fractional_ou(0.4999, 1.0);
        for &t in &[0.2, 1.0, 3.0] {
            let ou = SQRT_2 * (-t as f64).exp();
            assert_relative_eq!(kernel_eval(&f, t).unwrap(), ou, max_relative = 2e-3);
        }
    }

    #[test]
    fn domain_errors() {
        let f = KernelSpec::fractional_ou(0.2, 1.0);
        assert!(kernel_eval(&f, 0.0).is_err());
        assert!(kernel_eval(&f, -1.0).is_err());
        assert!(covariance_cz(&f, -0.1).is_err());
        assert!(KernelSpec::fractional_ou(0.7, 1.0).validate().is_err());
        assert!(KernelSpec { kind: KernelKind::StandardOu, hurst: Some(0.3), epsilon: 1.0 }.validate().is_err());
        assert!(KernelSpec::standard_ou(0.0).validate().is_err());
    }

    #[test]
    fn kernel_matches_defining_integral() {
        // 𝒦(t) = c [t^a - ∫₀^t (t-s)^a e^{-s} ds], with the integral done by quadrature.
        for &h in &[0.1, 0.3] {
            let spec = KernelSpec::fractional_ou(h, 1.0);
            let a = h - 0.5;
            for &t in &[0.05, 0.5, 2.0, 10.0, 39.0, 41.0, 80.0] {
                let inner = integrate_singular_origin(|u: f64| u.powf(a) * (-(t - u)).exp(), a / 2.0, t).unwrap();
                let oracle = spec.constant() * (t.powf(a) - inner);
                let k = kernel_eval(&spec, t).unwrap();
                assert!((k - oracle).abs() <= 1e-9 * k.abs() + 1e-14, "H={h} t={t} k={k} oracle={oracle}");
            }
        }
    }

    #[test]
    fn kernel_asymptotes() {
        let h: f64 = 0.1;
        let spec = KernelSpec::fractional_ou(h, 1.0);
        let c = spec.constant();
        let t: f64 = 1e-6;
        assert_relative_eq!(kernel_eval(&spec, t).unwrap(), c * t.powf(h - 0.5), max_relative = 1e-4);
        let t: f64 = 1e3;
        let large = (2.0 * (PI * h).sin()).sqrt() / gamma(h - 0.5) * t.powf(h - 1.5);
        assert_relative_eq!(kernel_eval(&spec, t).unwrap(), large, max_relative = 2e-3);
    }

    #[test]
    fn kernel_integral_is_antiderivative() {
        let spec = KernelSpec::fractional_ou(0.25, 1.0);
        let k = KernelFn::new(&spec);
        for &t in &[0.3, 1.0, 5.0, 45.0] {
            let dt = 1e-5 * t;
            let fd = (k.integral(t + dt) - k.integral(t - dt)) / (2.0 * dt);
            assert_relative_eq!(fd, k.eval(t), max_relative = 1e-6);
        }
        // decays like c·t^a, so ∫₀^∞ 𝒦 = 0
        let t: f64 = 1e8;
        assert_relative_eq!(k.integral(t), spec.constant() * t.powf(-0.25), max_relative = 1e-7);
    }

    #[test]
    fn l2_normalization() {
        for &h in &[0.1, 0.25, 0.4, 0.5] {
            let spec = KernelSpec::fractional_ou(h, 1.0);
            let n = kernel_l2_norm_sq(&spec).unwrap();
            assert!((n - 1.0).abs() < 1e-6, "H={h}: {n}");
        }
    }

    #[test]
    fn covariance_vs_overlap_oracle() {
        for &h in &[0.1, 0.3, 0.45] {
            let spec = KernelSpec::fractional_ou(h, 1.0);
            assert_eq!(covariance_cz(&spec, 0.0).unwrap(), 1.0);
            for &s in &[0.01, 0.3, 1.0, 4.0, 20.0] {
                let c = covariance_cz(&spec, s).unwrap();
                let o = direct_overlap(&spec, s, 0.0);
                assert!((c - o).abs() < 1e-7, "H={h} s={s}: {c} vs {o}");
            }
        }
    }

    #[test]
    fn covariance_series_asymptotic_continuity() {
        for &h in &[0.1, 0.3] {
            let below = cz_fractional(h, ASYMPTOTIC_FROM - 1e-9);
            let above = cz_fractional(h, ASYMPTOTIC_FROM + 1e-9);
            assert_relative_eq!(below, above, max_relative = 1e-9);
            // leading term s^{2H-2}/Γ(2H-1)
            let s: f64 = 500.0;
            assert_relative_eq!(cz_fractional(h, s), s.powf(2.0 * h - 2.0) / gamma(2.0 * h - 1.0), max_relative = 1e-3);
        }
    }

    #[test]
    fn covariance_small_lag_asymptote() {
        for &h in &[0.1, 0.3, 0.4] {
            let spec = KernelSpec::fractional_ou(h, 1.0);
            let s: f64 = 0.01;
            let approx = 1.0 - s.powf(2.0 * h) / gamma(2.0 * h + 1.0);
            let c = covariance_cz(&spec, s).unwrap();
            assert!((c / approx - 1.0).abs() < 0.05, "H={h}: {c} vs {approx}");
        }
    }

    #[test]
    fn overlap_matches_direct_quadrature() {
        let spec = KernelSpec::fractional_ou(0.2, 1.0);
        for &(s, s2) in &[(0.5, 0.5), (0.1, 2.0), (3.0, 0.7), (1e-3, 1e-3), (10.0, 12.0)] {
            let fast = kernel_overlap(&spec, s, s2).unwrap();
            let slow = direct_overlap(&spec, s, s2);
            assert!((fast - slow).abs() < 1e-8, "({s},{s2}): {fast} vs {slow}");
        }
        assert_relative_eq!(kernel_overlap(&spec, 0.0, 0.0).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn sq_integral_closed_form_ou() {
        let ou = KernelSpec::standard_ou(1.0);
        let f = KernelSpec::fractional_ou(0.5, 1.0);
        assert_relative_eq!(kernel_sq_integral(&ou, 0.3).unwrap(), 1.0 - (-0.6f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(kernel_sq_integral(&f, 0.3).unwrap(), 1.0 - (-0.6f64).exp(), max_relative = 1e-14);
    }
}
