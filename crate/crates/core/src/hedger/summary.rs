//! Order-fixed, compensated summary statistics.

/// Neumaier-compensated sum in slice order.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and (n − 1)-normalized standard deviation.
pub fn mean_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = neumaier(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = neumaier(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Standard error of `stdev(a) − stdev(b)` for paired samples.
///
/// Delta method: `ŝ ≈ s + ((X − μ)² − s²)/(2s)` per observation, so the
/// difference is the mean of `u = (a − ā)²/(2s_a) − (b − b̄)²/(2s_b)`.
pub fn joint_stdev_stderr(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let (ma, sa) = mean_stdev(a);
    let (mb, sb) = mean_stdev(b);
    let term = |v: f64, m: f64, s: f64| if s > 0.0 { (v - m) * (v - m) / (2.0 * s) } else { 0.0 };
    let u: Vec<f64> = a.iter().zip(b).map(|(x, y)| term(*x, ma, sa) - term(*y, mb, sb)).collect();
    mean_stdev(&u).1 / (a.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn compensation_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier(v.iter().copied()), 2.0);
        let (m, s) = mean_stdev(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_relative_eq!(s, (5.0f64 / 3.0).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn joint_stderr_vanishes_for_identical_samples_and_matches_bootstrap() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>() - 0.5).collect();
        assert_eq!(joint_stdev_stderr(&a, &a), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 0.3 * (rng.gen::<f64>() - 0.5)).collect();
        let se = joint_stdev_stderr(&a, &b);
        // replicate the experiment to measure the spread of stdev(a) − stdev(b)
        let reps: Vec<f64> = (0..300)
            .map(|_| {
                let a: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>() - 0.5).collect();
                let b: Vec<f64> = a.iter().map(|x| x + 0.3 * (rng.gen::<f64>() - 0.5)).collect();
                mean_stdev(&a).1 - mean_stdev(&b).1
            })
            .collect();
        let spread = mean_stdev(&reps).1;
        assert!((se / spread - 1.0).abs() < 0.2, "{se} vs {spread}");
    }

    proptest! {
        #[test]
        fn stdev_is_homogeneous(v in prop::collection::vec(-10.0f64..10.0, 2..50), c in 0.1f64..10.0) {
            let scaled: Vec<f64> = v.iter().map(|x| c * x + 3.0).collect();
            let (_, s) = mean_stdev(&v);
            let (_, sc) = mean_stdev(&scaled);
            prop_assert!((sc - c * s).abs() <= 1e-12 * (1.0 + c * s));
        }
    }
}
