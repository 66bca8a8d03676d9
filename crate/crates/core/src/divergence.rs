//! Statistical distances between discrete distributions and diagonal Gaussians.
//!
//! Natural logarithms throughout, so `JS <= ln 2`.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, SQRT_2};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::rng::standard_normal;

const MASS_TOL: f64 = 1e-12;

/// Probability mass over a finite, ordered, labeled support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf<L = usize> {
    support: Vec<L>,
    mass: Vec<f64>,
}

impl<L: Ord + Clone> DiscretePmf<L> {
    pub fn new(support: Vec<L>, mass: Vec<f64>) -> Result<Self> {
        if support.len() != mass.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: mass.len() });
        }
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let mut seen = support.clone();
        seen.sort();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidDistribution("duplicate support labels".into()));
        }
        if let Some(m) = mass.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::InvalidDistribution(format!("mass {m} is negative or non-finite")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { support, mass })
    }

    /// Normalises nonnegative weights. Errors if they sum to zero.
    pub fn from_weights(support: Vec<L>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        let mass = weights.iter().map(|w| w / total).collect();
        Self::new(support, mass)
    }

    pub fn support(&self) -> &[L] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn prob(&self, label: &L) -> f64 {
        self.support
            .iter()
            .position(|l| l == label)
            .map_or(0.0, |i| self.mass[i])
    }

    /// Aligns two PMFs on the union of their supports (missing labels get mass 0).
    pub fn align(&self, other: &Self) -> (Vec<f64>, Vec<f64>) {
        let mut table: BTreeMap<&L, (f64, f64)> = BTreeMap::new();
        for (l, m) in self.support.iter().zip(&self.mass) {
            table.entry(l).or_default().0 += m;
        }
        for (l, m) in other.support.iter().zip(&other.mass) {
            table.entry(l).or_default().1 += m;
        }
        table.into_values().unzip()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactSum,
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub value: f64,
    pub method: Method,
    pub error_estimate: f64,
}

impl DistanceResult {
    fn exact(value: f64) -> Self {
        Self { value, method: Method::ExactSum, error_estimate: 0.0 }
    }
}

/// `½ Σ |p − q|` over aligned mass vectors.
pub fn tv_slices(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let s: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    (0.5 * s).clamp(0.0, 1.0)
}

/// KL(p‖q) with `0·log 0 = 0`. Infinite when p puts mass where q has none.
pub fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a == 0.0 {
                0.0
            } else if b == 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum()
}

/// Jensen–Shannon divergence over aligned mass vectors.
///
/// Each label contributes `½[p ln(p/m) + q ln(q/m)]`, which is nonnegative by
/// convexity; writing it with `ln_1p` keeps nearly-equal inputs accurate.
pub fn js_slices(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == b {
            continue;
        }
        let term = if a == 0.0 {
            b * LN_2
        } else if b == 0.0 {
            a * LN_2
        } else {
            let m = 0.5 * (a + b);
            let d = (a - b) / (2.0 * m);
            a * d.ln_1p() + b * (-d).ln_1p()
        };
        s += term.max(0.0);
    }
    (0.5 * s).clamp(0.0, LN_2)
}

pub fn tv_discrete<L: Ord + Clone>(p: &DiscretePmf<L>, q: &DiscretePmf<L>) -> DistanceResult {
    let (a, b) = p.align(q);
    DistanceResult::exact(tv_slices(&a, &b))
}

pub fn kl_discrete<L: Ord + Clone>(p: &DiscretePmf<L>, q: &DiscretePmf<L>) -> DistanceResult {
    let (a, b) = p.align(q);
    DistanceResult::exact(kl_slices(&a, &b))
}

pub fn js_discrete<L: Ord + Clone>(p: &DiscretePmf<L>, q: &DiscretePmf<L>) -> DistanceResult {
    let (a, b) = p.align(q);
    DistanceResult::exact(js_slices(&a, &b))
}

pub fn sqrt_js<L: Ord + Clone>(p: &DiscretePmf<L>, q: &DiscretePmf<L>) -> f64 {
    js_discrete(p, q).value.sqrt()
}

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub variances: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let g = Self { mean, variances };
        g.validate()?;
        Ok(g)
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, vec![variance; n])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.variances.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), got: self.variances.len() });
        }
        if self.mean.is_empty() {
            return Err(Error::InvalidDistribution("zero-dimensional Gaussian".into()));
        }
        if self.mean.iter().chain(&self.variances).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Gaussian parameters".into()));
        }
        if let Some(v) = self.variances.iter().find(|v| **v <= 0.0) {
            return Err(Error::InvalidParameter(format!("variance {v} must be positive")));
        }
        Ok(())
    }

    /// Moment fit (unbiased variance) to a sample set.
    pub fn fit(samples: &[Vec<f64>]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::EmptySamples);
        }
        let n = samples[0].len();
        let t = samples.len() as f64;
        let mut mean = vec![0.0; n];
        for s in samples {
            if s.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: s.len() });
            }
            for (m, x) in mean.iter_mut().zip(s) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= t);
        let mut var = vec![0.0; n];
        for s in samples {
            for i in 0..n {
                var[i] += (s[i] - mean[i]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= t - 1.0);
        Self::new(mean, var)
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.variances)
            .zip(x)
            .map(|((m, v), xi)| log_normal_pdf(*xi, *m, *v))
            .sum()
    }

    /// Coordinates `from..` as a lower-dimensional Gaussian.
    pub fn tail(&self, from: usize) -> Result<Self> {
        Self::new(self.mean[from..].to_vec(), self.variances[from..].to_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.variances)
            .map(|(m, v)| m + v.sqrt() * standard_normal(rng))
            .collect()
    }
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
    -0.5 * (x - mean).powi(2) / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail, accurate far into the tail.
pub fn phi_c(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn check_pair(g1: &DiagGaussian, g2: &DiagGaussian) -> Result<()> {
    g1.validate()?;
    g2.validate()?;
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch { expected: g1.dim(), got: g2.dim() });
    }
    Ok(())
}

/// Log Bhattacharyya coefficient of two diagonal Gaussians, summed from the
/// last coordinate backwards so that dropping leading coordinates yields
/// bit-for-bit partial sums.
pub fn log_affinity(mu1: &[f64], var1: &[f64], mu2: &[f64], var2: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in (0..mu1.len()).rev() {
        let (v1, v2) = (var1[i], var2[i]);
        let avg = 0.5 * (v1 + v2);
        let det_term = 0.25 * v1.ln() + 0.25 * v2.ln() - 0.5 * avg.ln();
        let mean_term = (mu1[i] - mu2[i]).powi(2) / (8.0 * avg);
        acc += (det_term - mean_term).min(0.0);
    }
    acc
}

/// Hellinger-type distance `h = (1 − BC)^{1/2}` between two diagonal Gaussians.
pub fn hellinger_h(g1: &DiagGaussian, g2: &DiagGaussian) -> Result<f64> {
    check_pair(g1, g2)?;
    let la = log_affinity(&g1.mean, &g1.variances, &g2.mean, &g2.variances);
    Ok((-la.exp_m1()).clamp(0.0, 1.0).sqrt())
}

/// Same-mean sandwich `[1/100, 3/2] · min{1, √Σλ²}` with `λ_i = v2_i/v1_i − 1`.
pub fn same_mean_tv_bounds(var1: &[f64], var2: &[f64]) -> (f64, f64) {
    let s: f64 = var1.iter().zip(var2).map(|(a, b)| (b / a - 1.0).powi(2)).sum();
    let base = s.sqrt().min(1.0);
    (base / 100.0, 1.5 * base)
}

const QUAD_TOL: f64 = 1e-9;
const SPAN_SIGMAS: f64 = 10.0;
const MC_SAMPLES: usize = 1 << 17;
const MAX_DEPTH: u32 = 30;

/// Total variation between diagonal Gaussians.
///
/// 1-D equal variances use the closed form; 1-D otherwise and dimensions 2–3
/// use adaptive Simpson quadrature (the last coordinate handled analytically);
/// higher dimensions fall back to seeded Monte Carlo drawn from `rng`.
pub fn tv_gaussian<R: Rng + ?Sized>(
    g1: &DiagGaussian,
    g2: &DiagGaussian,
    rng: &mut R,
) -> Result<DistanceResult> {
    check_pair(g1, g2)?;
    if g1 == g2 {
        return Ok(DistanceResult { value: 0.0, method: Method::ClosedForm, error_estimate: 0.0 });
    }
    let n = g1.dim();
    if n == 1 && g1.variances[0] == g2.variances[0] {
        let z = (g1.mean[0] - g2.mean[0]).abs() / (2.0 * g1.variances[0].sqrt());
        let value = 1.0 - 2.0 * phi_c(z);
        return Ok(DistanceResult { value: value.clamp(0.0, 1.0), method: Method::ClosedForm, error_estimate: 0.0 });
    }
    if n == 1 {
        return Ok(tv_1d_quadrature(g1.mean[0], g1.variances[0], g2.mean[0], g2.variances[0]));
    }
    if n <= 3 {
        return Ok(tv_nested_quadrature(g1, g2));
    }
    Ok(tv_monte_carlo(g1, g2, rng))
}

/// Deterministic entry point for dimensions ≤ 3 (no RNG needed).
pub fn tv_gaussian_low_dim(g1: &DiagGaussian, g2: &DiagGaussian) -> Result<DistanceResult> {
    if g1.dim() > 3 {
        return Err(Error::InvalidParameter("quadrature path supports at most 3 dimensions".into()));
    }
    struct Never;
    impl rand::RngCore for Never {
        fn next_u32(&mut self) -> u32 {
            unreachable!("low-dimensional TV never samples")
        }
        fn next_u64(&mut self) -> u64 {
            unreachable!("low-dimensional TV never samples")
        }
        fn fill_bytes(&mut self, _: &mut [u8]) {
            unreachable!("low-dimensional TV never samples")
        }
    }
    tv_gaussian(g1, g2, &mut Never)
}

fn tv_1d_quadrature(m1: f64, v1: f64, m2: f64, v2: f64) -> DistanceResult {
    let (s1, s2) = (v1.sqrt(), v2.sqrt());
    let lo = (m1 - SPAN_SIGMAS * s1).min(m2 - SPAN_SIGMAS * s2);
    let hi = (m1 + SPAN_SIGMAS * s1).max(m2 + SPAN_SIGMAS * s2);
    let mut breaks = vec![lo, hi];
    breaks.extend(crossings(m1, v1, m2, v2, 0.0).into_iter().filter(|x| *x > lo && *x < hi));
    breaks.extend(panel_points(m1, s1, lo, hi));
    breaks.extend(panel_points(m2, s2, lo, hi));
    let f = |x: f64| 0.5 * (log_normal_pdf(x, m1, v1).exp() - log_normal_pdf(x, m2, v2).exp()).abs();
    let (value, err) = integrate_panels(&f, breaks, QUAD_TOL);
    DistanceResult { value: value.clamp(0.0, 1.0), method: Method::Quadrature, error_estimate: err }
}

/// Roots of `ln p(x) − ln q(x) = c` for p = N(m1,v1), q = N(m2,v2).
fn crossings(m1: f64, v1: f64, m2: f64, v2: f64, c: f64) -> Vec<f64> {
    let (a, b, k) = log_ratio_quadratic(m1, v1, m2, v2, c);
    solve_quadratic(a, b, k)
}

/// Coefficients of `a x² + b x + k` equal to `ln p − ln q − c`.
fn log_ratio_quadratic(m1: f64, v1: f64, m2: f64, v2: f64, c: f64) -> (f64, f64, f64) {
    let a = 0.5 * (1.0 / v2 - 1.0 / v1);
    let b = m1 / v1 - m2 / v2;
    let k = 0.5 * (v2 / v1).ln() - m1 * m1 / (2.0 * v1) + m2 * m2 / (2.0 * v2) - c;
    (a, b, k)
}

fn solve_quadratic(a: f64, b: f64, k: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(k.abs());
    if scale == 0.0 {
        return vec![];
    }
    if a == 0.0 {
        if b == 0.0 {
            return vec![];
        }
        return vec![-k / b];
    }
    let disc = b * b - 4.0 * a * k;
    if disc < 0.0 {
        return vec![];
    }
    let sgn = if b >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (b + sgn * disc.sqrt());
    let mut r = if q == 0.0 { vec![0.0, 0.0] } else { vec![q / a, k / q] };
    r.sort_by(|x, y| x.partial_cmp(y).unwrap());
    r
}

fn panel_points(m: f64, s: f64, lo: f64, hi: f64) -> Vec<f64> {
    [-6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0]
        .iter()
        .map(|k| m + k * s)
        .filter(|x| *x > lo && *x < hi)
        .collect()
}

/// Mass of N(m, v) on the set where `a x² + b x + k > 0`, plus the mass of
/// its complement, both computed without cancellation.
fn gaussian_mass_on_positive(m: f64, v: f64, a: f64, b: f64, k: f64) -> (f64, f64) {
    let s = v.sqrt();
    let z = |x: f64| (x - m) / s;
    let interval = |lo: f64, hi: f64| -> f64 {
        let (zl, zh) = (z(lo), z(hi));
        if zl > 0.0 {
            (phi_c(zl) - phi_c(zh)).max(0.0)
        } else {
            (phi(zh) - phi(zl)).max(0.0)
        }
    };
    let scale = a.abs().max(b.abs()).max(k.abs());
    if scale == 0.0 {
        return (0.0, 1.0);
    }
    if a == 0.0 {
        if b == 0.0 {
            return if k > 0.0 { (1.0, 0.0) } else { (0.0, 1.0) };
        }
        let r = -k / b;
        let above = phi_c(z(r));
        let below = phi(z(r));
        return if b > 0.0 { (above, below) } else { (below, above) };
    }
    let roots = solve_quadratic(a, b, k);
    if roots.len() < 2 {
        return if a > 0.0 { (1.0, 0.0) } else { (0.0, 1.0) };
    }
    let (r1, r2) = (roots[0], roots[1]);
    let inside = interval(r1, r2);
    let outside = phi(z(r1)) + phi_c(z(r2));
    if a > 0.0 {
        (outside, inside)
    } else {
        (inside, outside)
    }
}

/// For fixed leading coordinates with log-densities `lp`, `lq`, integrates
/// the last coordinate analytically. Returns `(∫(p−q)₊, ∫min(p,q))`.
fn last_coord(lp: f64, lq: f64, m1: f64, v1: f64, m2: f64, v2: f64) -> (f64, f64) {
    if lp == f64::NEG_INFINITY && lq == f64::NEG_INFINITY {
        return (0.0, 0.0);
    }
    let c = lq - lp;
    let (a, b, k) = log_ratio_quadratic(m1, v1, m2, v2, c);
    let (p_in, p_out) = gaussian_mass_on_positive(m1, v1, a, b, k);
    let (q_in, _) = gaussian_mass_on_positive(m2, v2, a, b, k);
    let (ep, eq) = (lp.exp(), lq.exp());
    let pos = (ep * p_in - eq * q_in).max(0.0);
    let overlap = ep * p_out + eq * q_in;
    (pos, overlap)
}

fn tv_nested_quadrature(g1: &DiagGaussian, g2: &DiagGaussian) -> DistanceResult {
    let n = g1.dim();
    let la = log_affinity(&g1.mean, &g1.variances, &g2.mean, &g2.variances);
    let bc = la.exp();
    let last = n - 1;
    let (m1, v1, m2, v2) = (g1.mean[last], g1.variances[last], g2.mean[last], g2.variances[last]);
    // Far-apart pairs integrate the overlap so TV = 1 − overlap avoids
    // summing many tiny positive parts.
    let use_overlap = bc < 0.5;
    if use_overlap && bc < 1e-17 {
        return DistanceResult { value: 1.0, method: Method::Quadrature, error_estimate: bc };
    }
    let tol = QUAD_TOL;
    let pick = |lp: f64, lq: f64| {
        let (pos, ov) = last_coord(lp, lq, m1, v1, m2, v2);
        if use_overlap {
            ov
        } else {
            pos
        }
    };
    let (value, err) = nested(g1, g2, 0, 0.0, 0.0, tol, &pick);
    let tv = if use_overlap { 1.0 - value } else { value };
    DistanceResult { value: tv.clamp(0.0, 1.0), method: Method::Quadrature, error_estimate: err }
}

fn nested(
    g1: &DiagGaussian,
    g2: &DiagGaussian,
    dim: usize,
    lp: f64,
    lq: f64,
    tol: f64,
    inner: &dyn Fn(f64, f64) -> f64,
) -> (f64, f64) {
    let n = g1.dim();
    if dim == n - 1 {
        return (inner(lp, lq), 0.0);
    }
    let (m1, v1, m2, v2) = (g1.mean[dim], g1.variances[dim], g2.mean[dim], g2.variances[dim]);
    let (s1, s2) = (v1.sqrt(), v2.sqrt());
    let lo = (m1 - SPAN_SIGMAS * s1).min(m2 - SPAN_SIGMAS * s2);
    let hi = (m1 + SPAN_SIGMAS * s1).max(m2 + SPAN_SIGMAS * s2);
    let mut breaks = vec![lo, hi];
    breaks.extend(panel_points(m1, s1, lo, hi));
    breaks.extend(panel_points(m2, s2, lo, hi));
    breaks.extend(slice_kinks(g1, g2, dim, lp - lq).into_iter().filter(|x| *x > lo && *x < hi));
    // A tenth of the budget goes to the inner integrals; their error integrates
    // to at most inner_tol·(hi − lo), which is added to the estimate.
    let inner_tol = 0.1 * tol / (hi - lo);
    let f = |x: f64| {
        let lp2 = lp + log_normal_pdf(x, m1, v1);
        let lq2 = lq + log_normal_pdf(x, m2, v2);
        nested(g1, g2, dim + 1, lp2, lq2, inner_tol, inner).0
    };
    let (v, e) = integrate_panels(&f, breaks, 0.9 * tol);
    let inner_err = if dim + 1 == n - 1 { 0.0 } else { inner_tol * (hi - lo) };
    (v, e + inner_err)
}

/// Values of coordinate `dim` where the slice of `{ln p − ln q > 0}` over the
/// remaining coordinates changes shape; the inner integral has a kink there.
fn slice_kinks(g1: &DiagGaussian, g2: &DiagGaussian, dim: usize, prefix: f64) -> Vec<f64> {
    let mut crit = 0.0;
    for i in dim + 1..g1.dim() {
        let (a, b, k) = log_ratio_quadratic(g1.mean[i], g1.variances[i], g2.mean[i], g2.variances[i], 0.0);
        if a == 0.0 {
            if b != 0.0 {
                return vec![];
            }
            crit += k;
        } else {
            crit += k - b * b / (4.0 * a);
        }
    }
    let (a, b, k) = log_ratio_quadratic(g1.mean[dim], g1.variances[dim], g2.mean[dim], g2.variances[dim], 0.0);
    solve_quadratic(a, b, k + prefix + crit)
}

/// Adaptive quadrature over panels delimited by sorted break points; the
/// tolerance is shared in proportion to panel width.
fn integrate_panels(f: &dyn Fn(f64) -> f64, mut breaks: Vec<f64>, tol: f64) -> (f64, f64) {
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    let total = breaks.last().unwrap() - breaks[0];
    let mut sum = 0.0;
    let mut err = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let share = tol * (b - a) / total;
        let (v, e) = adaptive_gk(f, a, b, share);
        sum += v;
        err += e;
    }
    (sum, err)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_W: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
// Gauss weights sit on the odd Kronrod nodes (1, 3, 5, centre).
const GAUSS_W: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut fv = [0.0; 15];
    fv[14] = f(c);
    let mut k = KRONROD_W[7] * fv[14];
    let mut g = GAUSS_W[3] * fv[14];
    for i in 0..7 {
        fv[2 * i] = f(c - h * GK_NODES[i]);
        fv[2 * i + 1] = f(c + h * GK_NODES[i]);
        let s = fv[2 * i] + fv[2 * i + 1];
        k += KRONROD_W[i] * s;
        if i % 2 == 1 {
            g += GAUSS_W[i / 2] * s;
        }
    }
    // QUADPACK's scaling of |K − G| against the spread of f on the panel.
    let mean = 0.5 * k;
    let mut asc = KRONROD_W[7] * (fv[14] - mean).abs();
    for i in 0..7 {
        asc += KRONROD_W[i] * ((fv[2 * i] - mean).abs() + (fv[2 * i + 1] - mean).abs());
    }
    let (asc, diff) = ((asc * h).abs(), ((k - g) * h).abs());
    let err = if asc > 0.0 && diff > 0.0 { asc * (200.0 * diff / asc).powf(1.5).min(1.0) } else { diff };
    (k * h, err)
}

/// Adaptive Gauss–Kronrod 7/15 to absolute tolerance `tol`. The tolerance is
/// floored at roundoff so nested calls cannot recurse on noise.
pub(crate) fn adaptive_gk(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (v, e) = gk15(f, a, b);
    gk_rec(f, a, b, v, e, tol, MAX_DEPTH)
}

fn gk_rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, v: f64, e: f64, tol: f64, depth: u32) -> (f64, f64) {
    let floor = 50.0 * f64::EPSILON * v.abs();
    if depth == 0 || e <= tol.max(floor) {
        return (v, e);
    }
    let m = 0.5 * (a + b);
    let (lv, le) = gk15(f, a, m);
    let (rv, re) = gk15(f, m, b);
    let (l, el) = gk_rec(f, a, m, lv, le, 0.5 * tol, depth - 1);
    let (r, er) = gk_rec(f, m, b, rv, re, 0.5 * tol, depth - 1);
    (l + r, el + er)
}

/// `TV = E_{x∼p}[(1 − q(x)/p(x))₊]`, with a 3-sigma error estimate.
fn tv_monte_carlo<R: Rng + ?Sized>(g1: &DiagGaussian, g2: &DiagGaussian, rng: &mut R) -> DistanceResult {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..MC_SAMPLES {
        let x = g1.sample(rng);
        let r = (g2.log_pdf(&x) - g1.log_pdf(&x)).exp();
        let v = (1.0 - r).max(0.0);
        sum += v;
        sum_sq += v * v;
    }
    let n = MC_SAMPLES as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    DistanceResult {
        value: mean.clamp(0.0, 1.0),
        method: Method::MonteCarlo,
        error_estimate: 3.0 * (var / n).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pmf(m: &[f64]) -> DiscretePmf {
        DiscretePmf::new((0..m.len()).collect(), m.to_vec()).unwrap()
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_discrete(&pmf(&[0.5, 0.5]), &pmf(&[0.5, 0.5])).value, 0.0);
        assert_eq!(tv_discrete(&pmf(&[1.0, 0.0]), &pmf(&[0.0, 1.0])).value, 1.0);
        assert_abs_diff_eq!(tv_discrete(&pmf(&[0.8, 0.2]), &pmf(&[0.5, 0.5])).value, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn js_examples() {
        assert_eq!(js_discrete(&pmf(&[0.3, 0.7]), &pmf(&[0.3, 0.7])).value, 0.0);
        assert_abs_diff_eq!(js_discrete(&pmf(&[1.0, 0.0]), &pmf(&[0.0, 1.0])).value, LN_2, epsilon = 1e-15);
        // Oracle: the textbook two-KL form.
        let (p, q): ([f64; 2], [f64; 2]) = ([0.8, 0.2], [0.5, 0.5]);
        let m: [f64; 2] = [0.65, 0.35];
        let oracle = 0.5 * (p[0] * (p[0] / m[0]).ln() + p[1] * (p[1] / m[1]).ln())
            + 0.5 * (q[0] * (q[0] / m[0]).ln() + q[1] * (q[1] / m[1]).ln());
        let got = js_discrete(&pmf(&p), &pmf(&q)).value;
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.0507, epsilon = 5e-5);
        assert_abs_diff_eq!(sqrt_js(&pmf(&[1.0, 0.0]), &pmf(&[0.0, 1.0])), 0.83255, epsilon = 1e-5);
    }

    #[test]
    fn union_alignment_handles_missing_labels() {
        let p = DiscretePmf::new(vec!["a", "b"], vec![0.5, 0.5]).unwrap();
        let q = DiscretePmf::new(vec!["b", "c"], vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(tv_discrete(&p, &q).value, 0.5, epsilon = 1e-15);
        assert!(kl_discrete(&p, &q).value.is_infinite());
    }

    #[test]
    fn pmf_rejects_bad_input() {
        assert!(DiscretePmf::new(vec![0, 0], vec![0.5, 0.5]).is_err());
        assert!(DiscretePmf::new(vec![0, 1], vec![0.7, 0.5]).is_err());
        assert!(DiscretePmf::new(vec![0, 1], vec![1.5, -0.5]).is_err());
    }

    fn g(m: &[f64], v: &[f64]) -> DiagGaussian {
        DiagGaussian::new(m.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn tv_gaussian_examples() {
        let a = g(&[0.0], &[1.0]);
        assert_eq!(tv_gaussian_low_dim(&a, &a).unwrap().value, 0.0);
        let b = g(&[1.0], &[1.0]);
        let r = tv_gaussian_low_dim(&a, &b).unwrap();
        assert_abs_diff_eq!(r.value, 0.382925, epsilon = 1e-6);
        // Quadrature cross-check of the closed form.
        let f = |x: f64| 0.5 * (log_normal_pdf(x, 0.0, 1.0).exp() - log_normal_pdf(x, 1.0, 1.0).exp()).abs();
        let (q, _) = integrate_panels(&f, vec![-10.0, 0.5, 11.0], 1e-12);
        assert_abs_diff_eq!(r.value, q, epsilon = 1e-9);

        let c = g(&[0.0, 0.0], &[1.0, 1.0]);
        let d = g(&[0.0, 0.0], &[2.0, 2.0]);
        let tv = tv_gaussian_low_dim(&c, &d).unwrap().value;
        let (lo, hi) = same_mean_tv_bounds(&c.variances, &d.variances);
        assert!(lo <= tv && tv <= hi, "{lo} {tv} {hi}");
    }

    #[test]
    fn one_dim_quadrature_matches_region_formula() {
        let (m1, v1, m2, v2) = (0.3, 0.5, -0.4, 2.0);
        let quad = tv_1d_quadrature(m1, v1, m2, v2).value;
        let (pos, ov) = last_coord(0.0, 0.0, m1, v1, m2, v2);
        assert_abs_diff_eq!(quad, pos, epsilon = 1e-9);
        assert_abs_diff_eq!(pos + ov, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nested_matches_product_for_separable_case() {
        // Second coordinate identical, so 2-D TV equals the 1-D TV.
        let a = g(&[0.0, 0.5], &[1.0, 0.7]);
        let b = g(&[0.8, 0.5], &[1.5, 0.7]);
        let two = tv_gaussian_low_dim(&a, &b).unwrap().value;
        let one = tv_1d_quadrature(0.0, 1.0, 0.8, 1.5).value;
        assert_abs_diff_eq!(two, one, epsilon = 1e-8);
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature_structure() {
        let mut rng = crate::rng::stream(1, crate::rng::Purpose::MonteCarlo, &[0]);
        let a = g(&[0.0; 4], &[1.0; 4]);
        let b = g(&[1.0, 0.0, 0.0, 0.0], &[1.0; 4]);
        let r = tv_gaussian(&a, &b, &mut rng).unwrap();
        assert_eq!(r.method, Method::MonteCarlo);
        assert!((r.value - 0.382925).abs() <= r.error_estimate + 1e-3);
    }

    #[test]
    fn hellinger_examples() {
        let a = g(&[0.0], &[1.0]);
        assert_eq!(hellinger_h(&a, &a).unwrap(), 0.0);
        let b = g(&[1.0], &[1.0]);
        // Oracle: numerical Bhattacharyya coefficient ∫√(pq).
        let f = |x: f64| (0.5 * (log_normal_pdf(x, 0.0, 1.0) + log_normal_pdf(x, 1.0, 1.0))).exp();
        let (bc, _) = integrate_panels(&f, vec![-12.0, 0.5, 13.0], 1e-13);
        assert_abs_diff_eq!(hellinger_h(&a, &b).unwrap(), (1.0 - bc).sqrt(), epsilon = 1e-9);
        assert!(hellinger_h(&a, &DiagGaussian { mean: vec![0.0], variances: vec![0.0] }).is_err());
    }

    #[test]
    fn non_finite_parameters_rejected() {
        assert!(DiagGaussian::new(vec![f64::NAN], vec![1.0]).is_err());
        let a = DiagGaussian { mean: vec![0.0], variances: vec![f64::INFINITY] };
        assert!(tv_gaussian_low_dim(&a, &a).is_err());
    }

    fn pmf_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("nonzero", |w| {
            let s: f64 = w.iter().sum();
            (s > 0.0).then(|| w.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn symmetry_and_ranges(p in pmf_strategy(6), q in pmf_strategy(6)) {
            let tv = tv_slices(&p, &q);
            let js = js_slices(&p, &q);
            prop_assert_eq!(tv, tv_slices(&q, &p));
            prop_assert!((js - js_slices(&q, &p)).abs() <= 1e-15);
            prop_assert!((0.0..=1.0).contains(&tv));
            prop_assert!((0.0..=LN_2).contains(&js));
        }

        #[test]
        fn am_gm_pointwise(p in pmf_strategy(8), q in pmf_strategy(8)) {
            for (a, b) in p.iter().zip(&q) {
                if *b > 0.0 {
                    let m = 0.5 * (a + b);
                    prop_assert!(a / m <= m / b * (1.0 + 1e-12));
                }
            }
        }

        #[test]
        fn hellinger_sandwich_1d(m1 in -3.0f64..3.0, m2 in -3.0f64..3.0, v1 in 0.1f64..4.0, v2 in 0.1f64..4.0) {
            let a = g(&[m1], &[v1]);
            let b = g(&[m2], &[v2]);
            let h = hellinger_h(&a, &b).unwrap();
            let tv = tv_gaussian_low_dim(&a, &b).unwrap().value;
            prop_assert!(h * h <= tv + 1e-9);
            prop_assert!(tv <= SQRT_2 * h + 1e-9);
        }
    }
}
