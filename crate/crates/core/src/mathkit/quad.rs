//! Deterministic quadrature: Gauss-Legendre, Gauss-Hermite (Gaussian weight
//! built in) and adaptive Gauss-Kronrod 7/15 with a node budget.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Ordering;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::special::normal_pdf;
use super::MathError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadScheme {
    GaussHermite,
    GaussLegendre,
    Adaptive,
}

/// Substitution removing an inverse-square-root singularity at one endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointMap {
    #[default]
    None,
    /// `s = a + (b-a)u²`
    SqrtLeft,
    /// `s = b - (b-a)u²`
    SqrtRight,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    pub scheme: QuadScheme,
    /// Number of nodes for the fixed rules; for the adaptive scheme the
    /// number of equal panels the interval is split into before refinement.
    pub order: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    #[serde(default)]
    pub endpoint_map: EndpointMap,
}

impl QuadSpec {
    pub fn adaptive(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            scheme: QuadScheme::Adaptive,
            order: 2,
            abs_tol,
            rel_tol,
            endpoint_map: EndpointMap::None,
        }
    }

    pub fn gauss_legendre(order: usize) -> Self {
        Self {
            scheme: QuadScheme::GaussLegendre,
            order,
            abs_tol: 0.0,
            rel_tol: 0.0,
            endpoint_map: EndpointMap::None,
        }
    }

    pub fn gauss_hermite(order: usize) -> Self {
        Self {
            scheme: QuadScheme::GaussHermite,
            order,
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            endpoint_map: EndpointMap::None,
        }
    }

    pub fn with_map(mut self, map: EndpointMap) -> Self {
        self.endpoint_map = map;
        self
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn validate(&self) -> Result<(), MathError> {
        if self.order < 2 {
            return Err(MathError::InvalidSpec(format!("order {} < 2", self.order)));
        }
        if !(self.abs_tol >= 0.0 && self.rel_tol >= 0.0) {
            return Err(MathError::InvalidSpec("negative tolerance".into()));
        }
        if self.scheme == QuadScheme::Adaptive && self.abs_tol == 0.0 && self.rel_tol == 0.0 {
            return Err(MathError::InvalidSpec(
                "adaptive scheme needs a nonzero tolerance".into(),
            ));
        }
        Ok(())
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self::adaptive(1e-12, 1e-10)
    }
}

/// Envelope of an integrand's tail, used to bound the truncated part of a
/// half-line integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decay {
    /// `|f(t)| = O(t^{-d})`, `d > 1`.
    Power(f64),
    /// `|f(t)| = O(e^{-r t})`.
    Exponential(f64),
}

impl Decay {
    fn tail_bound(&self, t: f64, ft: f64) -> f64 {
        match *self {
            Decay::Power(d) => ft.abs() * t / (d - 1.0),
            Decay::Exponential(r) => ft.abs() / r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Interval(f64, f64),
    HalfLine { start: f64, decay: Decay },
    /// `∫ f(z) p(z) dz` with `p` the standard normal density.
    StandardNormal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

impl QuadResult {
    fn add(&mut self, other: QuadResult) {
        self.value += other.value;
        self.error += other.error;
        self.evaluations += other.evaluations;
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 6000;
const MAX_HALFLINE_CHUNKS: usize = 400;

type Integrand<'a> = &'a dyn Fn(f64) -> f64;

fn eval(f: Integrand, x: f64) -> Result<f64, MathError> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(MathError::NonFinite { at: x })
    }
}

fn gk15(f: Integrand, a: f64, b: f64) -> Result<(f64, f64), MathError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = eval(f, c)?;
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = eval(f, c - dx)? + eval(f, c + dx)?;
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Ok((k * h, ((k - g) * h).abs()))
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn adaptive(
    f: Integrand,
    a: f64,
    b: f64,
    panels: usize,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult, MathError> {
    let panels = panels.max(1);
    let mut heap = BinaryHeap::with_capacity(64);
    let (mut value, mut error) = (0.0, 0.0);
    let w = (b - a) / panels as f64;
    for i in 0..panels {
        let lo = a + w * i as f64;
        let hi = if i + 1 == panels { b } else { lo + w };
        let (v, e) = gk15(f, lo, hi)?;
        value += v;
        error += e;
        heap.push(Segment { a: lo, b: hi, value: v, error: e });
    }
    let mut evaluations = 15 * panels;
    loop {
        let tol = abs_tol.max(rel_tol * value.abs());
        if error <= tol {
            break;
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(MathError::QuadNonConvergence {
                estimate: value,
                error_bound: error,
            });
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Cannot split further in floating point.
            return Err(MathError::QuadNonConvergence {
                estimate: value,
                error_bound: error,
            });
        }
        let (v1, e1) = gk15(f, seg.a, mid)?;
        let (v2, e2) = gk15(f, mid, seg.b)?;
        evaluations += 30;
        value += v1 + v2 - seg.value;
        error += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
    }
    // Re-sum from the segments so accumulated update round-off does not leak.
    let mut segs: Vec<_> = heap.into_vec();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = segs.iter().map(|s| s.value).sum();
    let error = segs.iter().map(|s| s.error).sum();
    Ok(QuadResult { value, error, evaluations })
}

/// Nodes and weights of an `n`-point rule.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn cached(kind: u8, n: usize, build: fn(usize) -> Rule) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<(u8, usize), Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&(kind, n)) {
        return r.clone();
    }
    let rule = Arc::new(build(n));
    cache.lock().unwrap().insert((kind, n), rule.clone());
    rule
}

/// Gauss-Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre(Arc<Rule>);

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        Self(cached(0, n, legendre_rule))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.0.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.0.weights
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in self.0.nodes.iter().zip(&self.0.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }
}

fn legendre_rule(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

/// Gauss-Hermite rule for standard normal expectations: `E[f(Z)] ≈ Σ wᵢ f(zᵢ)`.
/// The weights already include the Gaussian density and sum to one.
#[derive(Clone, Debug)]
pub struct GaussHermite(Arc<Rule>);

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        Self(cached(1, n, hermite_rule))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.0.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.0.weights
    }

    pub fn order(&self) -> usize {
        self.0.nodes.len()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.0
            .nodes
            .iter()
            .zip(&self.0.weights)
            .map(|(z, w)| w * f(*z))
            .sum()
    }
}

fn hermite_rule(n: usize) -> Rule {
    // Physicists' nodes by Newton iteration on orthonormal Hermite functions,
    // then rescaled to the standard normal weight.
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 1.0;
        for _ in 0..200 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let mut weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
    nodes.reverse();
    weights.reverse();
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn fixed_legendre(f: Integrand, a: f64, b: f64, n: usize) -> Result<QuadResult, MathError> {
    let v_hi = GaussLegendre::new(n).integrate(f, a, b);
    let v_lo = GaussLegendre::new((n / 2).max(1)).integrate(f, a, b);
    if !v_hi.is_finite() {
        return Err(MathError::NonFinite { at: f64::NAN });
    }
    Ok(QuadResult {
        value: v_hi,
        error: (v_hi - v_lo).abs(),
        evaluations: n + n / 2,
    })
}

fn panel(f: Integrand, a: f64, b: f64, spec: &QuadSpec, abs_tol: f64) -> Result<QuadResult, MathError> {
    match spec.scheme {
        QuadScheme::Adaptive => adaptive(f, a, b, spec.order, abs_tol, spec.rel_tol),
        QuadScheme::GaussLegendre => fixed_legendre(f, a, b, spec.order),
        QuadScheme::GaussHermite => Err(MathError::InvalidSpec(
            "Gauss-Hermite applies to the standard normal domain only".into(),
        )),
    }
}

fn interval(f: Integrand, a: f64, b: f64, spec: &QuadSpec) -> Result<QuadResult, MathError> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 });
    }
    if !(a < b) {
        return Err(MathError::InvalidSpec(format!("empty interval [{a}, {b}]")));
    }
    let len = b - a;
    match spec.endpoint_map {
        EndpointMap::None => panel(f, a, b, spec, spec.abs_tol),
        EndpointMap::SqrtRight => {
            let g = |u: f64| 2.0 * len * u * f(b - len * u * u);
            panel(&g, 0.0, 1.0, spec, spec.abs_tol)
        }
        EndpointMap::SqrtLeft => {
            let g = |u: f64| 2.0 * len * u * f(a + len * u * u);
            panel(&g, 0.0, 1.0, spec, spec.abs_tol)
        }
    }
}

fn half_line(f: Integrand, start: f64, decay: Decay, spec: &QuadSpec) -> Result<QuadResult, MathError> {
    let mut total = QuadResult { value: 0.0, error: 0.0, evaluations: 0 };
    let mut lo = start;
    let mut hi = if start.abs() < 1.0 { start + 1.0 } else { 2.0 * start.abs().max(1.0) + start.min(0.0) };
    let base_tol = spec.abs_tol.max(1e-300);
    for k in 0..MAX_HALFLINE_CHUNKS {
        let kf = (k + 2) as f64;
        let tol = base_tol.max(spec.rel_tol * total.value.abs()) / (kf * kf);
        let chunk = panel(f, lo, hi, &QuadSpec { endpoint_map: EndpointMap::None, ..*spec }, tol)?;
        total.add(chunk);
        let fend = eval(f, hi)?;
        let tail = decay.tail_bound(hi, fend);
        let target = spec.target(total.value) * 1e-2;
        if tail <= target && chunk.value.abs() <= spec.target(total.value).max(tail) * 1e3 {
            total.error += tail;
            return Ok(total);
        }
        lo = hi;
        hi = if hi < 1.0 { hi + 1.0 } else { 2.0 * hi };
    }
    Err(MathError::QuadNonConvergence {
        estimate: total.value,
        error_bound: total.error,
    })
}

fn standard_normal(f: Integrand, spec: &QuadSpec) -> Result<QuadResult, MathError> {
    match spec.scheme {
        QuadScheme::GaussHermite => {
            let v = GaussHermite::new(spec.order).expect(f);
            if !v.is_finite() {
                return Err(MathError::NonFinite { at: f64::NAN });
            }
            let half = GaussHermite::new((spec.order / 2).max(1)).expect(f);
            Ok(QuadResult { value: v, error: (v - half).abs(), evaluations: spec.order })
        }
        _ => {
            // z = t/(1-t²) maps (-1, 1) onto the real line.
            let g = |t: f64| {
                let d = 1.0 - t * t;
                let z = t / d;
                let p = normal_pdf(z);
                if p == 0.0 {
                    0.0
                } else {
                    f(z) * p * (1.0 + t * t) / (d * d)
                }
            };
            panel(&g, -1.0, 1.0, spec, spec.abs_tol)
        }
    }
}

/// Integral of `f` over `domain` with its error estimate.
pub fn integrate_1d_with_error(
    f: impl Fn(f64) -> f64,
    domain: Domain,
    spec: &QuadSpec,
) -> Result<QuadResult, MathError> {
    spec.validate()?;
    let f: Integrand = &f;
    match domain {
        Domain::Interval(a, b) => interval(f, a, b, spec),
        Domain::HalfLine { start, decay } => half_line(f, start, decay, spec),
        Domain::StandardNormal => standard_normal(f, spec),
    }
}

pub fn integrate_1d(f: impl Fn(f64) -> f64, domain: Domain, spec: &QuadSpec) -> Result<f64, MathError> {
    integrate_1d_with_error(f, domain, spec).map(|r| r.value)
}

/// Standard bivariate normal with the given correlation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BivariateGaussian {
    correlation: f64,
}

impl BivariateGaussian {
    pub fn new(correlation: f64) -> Result<Self, MathError> {
        if !(-1.0..=1.0).contains(&correlation) {
            return Err(MathError::Domain {
                function: "BivariateGaussian::new",
                value: correlation,
            });
        }
        Ok(Self { correlation })
    }

    pub fn correlation(&self) -> f64 {
        self.correlation
    }

    pub fn pdf(&self, z1: f64, z2: f64) -> f64 {
        let c = self.correlation;
        let det = 1.0 - c * c;
        let q = (z1 * z1 - 2.0 * c * z1 * z2 + z2 * z2) / det;
        (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    }

    /// `E[f(Z1, Z2)]` by tensor Gauss-Hermite with a Cholesky factor.
    pub fn expect(&self, rule: &GaussHermite, f: impl Fn(f64, f64) -> f64) -> f64 {
        let c = self.correlation;
        let s = (1.0 - c * c).max(0.0).sqrt();
        let (nodes, weights) = (rule.nodes(), rule.weights());
        let mut total = 0.0;
        for (x1, w1) in nodes.iter().zip(weights) {
            let mut inner = 0.0;
            for (x2, w2) in nodes.iter().zip(weights) {
                inner += w2 * f(*x1, c * x1 + s * x2);
            }
            total += w1 * inner;
        }
        total
    }
}

const MAX_GH_ORDER: usize = 256;

/// `E[f(Z1, Z2)]` under `corr`.
///
/// Fixed Gauss-Hermite uses `spec.order` nodes per axis; the adaptive scheme
/// doubles the order until successive values agree to the tolerance.
pub fn integrate_gauss_2d(
    f: impl Fn(f64, f64) -> f64,
    corr: BivariateGaussian,
    spec: &QuadSpec,
) -> Result<f64, MathError> {
    spec.validate()?;
    let check = |v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(MathError::NonFinite { at: f64::NAN })
        }
    };
    match spec.scheme {
        QuadScheme::GaussHermite => check(corr.expect(&GaussHermite::new(spec.order), &f)),
        QuadScheme::Adaptive => {
            let mut n = spec.order.max(8);
            let mut prev = check(corr.expect(&GaussHermite::new(n), &f))?;
            while n < MAX_GH_ORDER {
                n *= 2;
                let next = check(corr.expect(&GaussHermite::new(n), &f))?;
                if (next - prev).abs() <= spec.target(next) {
                    return Ok(next);
                }
                prev = next;
            }
            Err(MathError::QuadNonConvergence {
                estimate: prev,
                error_bound: f64::NAN,
            })
        }
        QuadScheme::GaussLegendre => Err(MathError::InvalidSpec(
            "bivariate Gaussian expectations need the Gauss-Hermite or adaptive scheme".into(),
        )),
    }
}
