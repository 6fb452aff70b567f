//! Normal distribution, exponential integrals and the Gamma function.

use std::f64::consts::FRAC_1_SQRT_2;

use libm::erfc;

use super::MathError;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF through `erfc`, which keeps full relative accuracy in
/// the lower tail.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Inverse of [`normal_cdf`] on (0, 1).
///
/// Acklam's rational approximation followed by two Halley steps against
/// [`normal_cdf`].
pub fn normal_inv_cdf(p: f64) -> Result<f64, MathError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MathError::Domain {
            function: "normal_inv_cdf",
            value: p,
        });
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let tail = |q: f64| {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    let mut x = if p < 0.024_25 {
        tail(p)
    } else if p > 1.0 - 0.024_25 {
        -tail(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        // Work with the smaller tail probability to avoid cancellation.
        let e = if x <= 0.0 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_cdf(-x)
        };
        let u = e / normal_pdf(x);
        if !u.is_finite() {
            break;
        }
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Exponential integral `E1(z) = ∫_z^∞ e^{-t}/t dt` for `z > 0`.
pub fn exp_integral_e1(z: f64) -> Result<f64, MathError> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(MathError::Domain {
            function: "exp_integral_e1",
            value: z,
        });
    }
    if z <= 1.0 {
        // E1(z) = -γ - ln z - Σ_{k≥1} (-z)^k / (k·k!)
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..200 {
            let k = k as f64;
            term *= -z / k;
            let add = term / k;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        Ok(-EULER_GAMMA - z.ln() - sum)
    } else {
        // Modified Lentz evaluation of the continued fraction.
        let tiny = 1e-300;
        let mut b = z + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                return Ok(h * (-z).exp());
            }
        }
        Err(MathError::NoConvergence {
            function: "exp_integral_e1",
        })
    }
}

/// Entire exponential integral `Ein⁺(x) = ∫_0^x (e^t - 1)/t dt = Σ x^k/(k·k!)`.
///
/// Equals `Ei(x) - γ - ln x` for `x > 0`; the series has no cancellation.
pub fn exp_integral_ein_plus(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x > 40.0 {
        return exp_integral_ei(x) - EULER_GAMMA - x.ln();
    }
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..400 {
        let kf = k as f64;
        term *= x / kf;
        let add = term / kf;
        sum += add;
        if add.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Exponential integral `Ei(x)` for `x > 0` (principal value).
pub fn exp_integral_ei(x: f64) -> f64 {
    if x <= 40.0 {
        return EULER_GAMMA + x.ln() + exp_integral_ein_plus(x);
    }
    // Asymptotic series e^x/x Σ k!/x^k, truncated at its smallest term.
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let next = term * k as f64 / x;
        if next > term {
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    x.exp() / x * sum
}

/// Rising factorial `(x)_k`.
pub fn pochhammer(x: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (x + i as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_relative_eq!(normal_pdf(0.0), 0.398_942_280_4, epsilon = 1e-10);
        // Independent oracle: Simpson's rule on the density over [0, 1.96].
        let n = 20_000;
        let h = 1.96 / n as f64;
        let mut s = normal_pdf(0.0) + normal_pdf(1.96);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * normal_pdf(i as f64 * h);
        }
        let oracle = 0.5 + s * h / 3.0;
        assert_relative_eq!(normal_cdf(1.96), oracle, epsilon = 1e-12);
        assert_relative_eq!(normal_cdf(1.96), 0.975_002_1, epsilon = 1e-7);
    }

    #[test]
    fn cdf_symmetry_and_tail() {
        for &z in &[0.1, 0.7, 1.5, 3.0, 6.0, 9.0] {
            assert_relative_eq!(normal_cdf(-z), 1.0 - normal_cdf(z), epsilon = 1e-15);
        }
        // Mills-ratio asymptote for the far tail: relative accuracy survives.
        let z: f64 = 20.0;
        let mills = normal_pdf(z) / z * (1.0 - 1.0 / (z * z) + 3.0 / z.powi(4) - 15.0 / z.powi(6));
        assert_relative_eq!(normal_cdf(-z), mills, max_relative = 1e-7);
    }

    #[test]
    fn inverse_round_trip() {
        let mut z = -6.0;
        while z <= 6.0 {
            let p = normal_cdf(z);
            let back = normal_cdf(normal_inv_cdf(p).unwrap());
            assert!((back - p).abs() <= 1e-10 * p, "z={z} p={p} back={back}");
            if z <= 0.0 {
                // lower tail probabilities carry full relative precision
                assert!((normal_inv_cdf(p).unwrap() - z).abs() < 1e-10);
            }
            z += 0.05;
        }
        assert!(normal_inv_cdf(0.0).is_err());
        assert!(normal_inv_cdf(1.0).is_err());
    }

    #[test]
    fn gamma_values() {
        assert_relative_eq!(gamma(0.5), std::f64::consts::PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(5.0), 24.0, max_relative = 1e-14);
        assert_relative_eq!(gamma(1.6) * 0.6, gamma(0.6) * 0.6 * 0.6, max_relative = 1e-13);
    }

    #[test]
    fn pdf_is_cdf_derivative() {
        for &z in &[-2.5, -0.3, 0.0, 0.8, 2.2] {
            let h = 1e-5;
            let fd = (normal_cdf(z + h) - normal_cdf(z - h)) / (2.0 * h);
            assert_relative_eq!(fd, normal_pdf(z), max_relative = 1e-8);
        }
    }

    #[test]
    fn e1_values() {
        // Reference from composite Simpson on ∫_1^∞ e^{-t}/t dt with t = 1/u.
        let oracle = {
            let f = |u: f64| if u == 0.0 { 0.0 } else { (-1.0 / u).exp() / u };
            let n = 200_000;
            let h = 1.0 / n as f64;
            let mut s = f(0.0) + f(1.0);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
            }
            s * h / 3.0
        };
        let e1 = exp_integral_e1(1.0).unwrap();
        assert_relative_eq!(e1, oracle, max_relative = 1e-10);
        assert_relative_eq!(e1, 0.219_383_934_4, epsilon = 1e-10);
        assert!(exp_integral_e1(10.0).unwrap() <= (-10.0f64).exp() / 10.0);
        assert!(exp_integral_e1(0.0).is_err());
        assert!(exp_integral_e1(-1.0).is_err());
    }

    #[test]
    fn e1_small_argument_limit() {
        let z = 1e-9;
        let v = exp_integral_e1(z).unwrap() + z.ln();
        assert!((v + EULER_GAMMA).abs() < 1e-8);
    }

    #[test]
    fn e1_derivative_and_monotone() {
        let mut z = 0.1;
        let mut prev = f64::INFINITY;
        while z <= 10.0 {
            let e = exp_integral_e1(z).unwrap();
            assert!(e < prev);
            prev = e;
            let h = 1e-5 * z;
            let fd = (exp_integral_e1(z + h).unwrap() - exp_integral_e1(z - h).unwrap()) / (2.0 * h);
            let exact = -(-z).exp() / z;
            assert_relative_eq!(fd, exact, max_relative = 1e-6);
            z += 0.1;
        }
    }

    #[test]
    fn ei_matches_series_and_asymptotics() {
        // Ei(1) = 1.8951178163559368
        assert_relative_eq!(exp_integral_ei(1.0), 1.895_117_816_355_936_8, max_relative = 1e-14);
        // Continuity across the series / asymptotic switch.
        let lo = EULER_GAMMA + 40.0f64.ln() + {
            let mut term = 1.0;
            let mut sum = 0.0;
            for k in 1..400 {
                term *= 40.0 / k as f64;
                sum += term / k as f64;
            }
            sum
        };
        assert_relative_eq!(exp_integral_ei(40.0 + 1e-12), lo, max_relative = 1e-12);
    }
}
