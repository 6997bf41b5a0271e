//! Normal distribution helpers and one-dimensional Gaussian expectations.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;
use serde::Serialize;
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `Φ⁻¹(p)` for `p` in `(0, 1)`, polished by one Halley step.
pub fn norm_quantile(p: f64) -> f64 {
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    let e = if x < 0.0 { norm_cdf(x) - p } else { (1.0 - p) - norm_sf(x) };
    let u = e / norm_pdf(x);
    x - u / (1.0 + 0.5 * x * u)
}

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)`.
pub fn hermite_nodes(n: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&n) {
        return rule.clone();
    }
    let quad = GaussHermite::new(NonZeroUsize::new(n).expect("order must be positive"));
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let rule: Vec<(f64, f64)> = quad
        .iter()
        .map(|(x, w)| (SQRT_2 * x, w * inv_sqrt_pi))
        .collect();
    let rule = Arc::new(rule);
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

/// Fixed-order Gauss–Hermite approximation of `E[f(Z)]`.
pub fn gauss_hermite_expectation<F: Fn(f64) -> f64>(f: F, n: usize) -> f64 {
    hermite_nodes(n).iter().map(|&(x, w)| w * f(x)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureMethod {
    GaussHermite,
    AdaptiveLegendre,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadrature {
    pub value: f64,
    pub error_estimate: f64,
    pub method: QuadratureMethod,
    /// Hermite order reached or number of Legendre panels.
    pub size: usize,
}

pub const MIN_HERMITE_ORDER: usize = 16;
pub const MAX_HERMITE_ORDER: usize = 512;

/// Half-width of the truncated domain used by the Legendre fallback; the
/// standard normal mass beyond it is below `1e-30`.
const TRUNCATION: f64 = 12.0;

/// Narrowest transition, in standard-normal units, for which Gauss–Hermite
/// is attempted.
pub const HERMITE_MIN_WIDTH: f64 = 0.5;

/// `E[f(Z)]` to absolute tolerance `tol`.
///
/// `width` is the length scale of the sharpest feature of `f`. When it is at
/// least [`HERMITE_MIN_WIDTH`], Gauss–Hermite order is doubled from 16 until
/// three successive values agree within `tol`. Sharper integrands, and those
/// that do not settle before order 512, are handled by adaptive
/// Gauss–Legendre on the truncated line split at `breakpoints`.
pub fn normal_expectation<F: Fn(f64) -> f64>(f: F, tol: f64, breakpoints: &[f64], width: f64) -> Result<Quadrature> {
    let mut last_diff = f64::INFINITY;
    if width >= HERMITE_MIN_WIDTH {
        let (q, diff) = hermite_doubling(&f, tol);
        if let Some(q) = q {
            return Ok(q);
        }
        last_diff = diff;
    }
    piecewise_normal_expectation(&f, tol, breakpoints).map_err(|e| match e {
        Error::QuadratureNonConvergence { achieved } => {
            Error::QuadratureNonConvergence { achieved: achieved.min(last_diff) }
        }
        e => e,
    })
}

fn hermite_doubling<F: Fn(f64) -> f64>(f: &F, tol: f64) -> (Option<Quadrature>, f64) {
    let mut n = MIN_HERMITE_ORDER;
    let mut prev = gauss_hermite_expectation(f, n);
    let mut prev_diff = f64::INFINITY;
    let mut last_diff = f64::INFINITY;
    while n < MAX_HERMITE_ORDER {
        n *= 2;
        let cur = gauss_hermite_expectation(f, n);
        last_diff = (cur - prev).abs();
        if last_diff < tol && prev_diff < tol {
            let q = Quadrature {
                value: cur,
                error_estimate: last_diff.max(prev_diff),
                method: QuadratureMethod::GaussHermite,
                size: n,
            };
            return (Some(q), last_diff);
        }
        prev_diff = last_diff;
        prev = cur;
    }
    (None, last_diff)
}

/// `E[f(Z)]` by adaptive Gauss–Legendre on the truncated line, split at
/// `breakpoints`; meant for integrands with kinks or near-steps.
pub fn piecewise_normal_expectation<F: Fn(f64) -> f64>(
    f: &F,
    tol: f64,
    breakpoints: &[f64],
) -> Result<Quadrature> {
    let weighted = |z: f64| f(z) * norm_pdf(z);
    let mut cuts: Vec<f64> = Vec::new();
    for &b in breakpoints.iter().filter(|b| b.is_finite() && b.abs() < TRUNCATION) {
        cuts.push(b);
        // Geometric grading resolves transitions much narrower than a panel,
        // which a 10/20-point pair can otherwise step over unnoticed.
        let mut h = 1.0;
        while h > 1e-12 {
            for c in [b - h, b + h] {
                if c.abs() < TRUNCATION {
                    cuts.push(c);
                }
            }
            h *= 0.1;
        }
    }
    cuts.push(-TRUNCATION);
    cuts.push(TRUNCATION);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    adaptive_legendre(&weighted, &cuts, tol)
}

fn legendre_rule(n: usize) -> &'static GaussLegendre {
    static R10: OnceLock<GaussLegendre> = OnceLock::new();
    static R20: OnceLock<GaussLegendre> = OnceLock::new();
    match n {
        10 => R10.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(10).unwrap())),
        _ => R20.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(20).unwrap())),
    }
}

/// Adaptive bisection with a 10/20-point Gauss–Legendre pair per panel.
pub fn adaptive_legendre<F: Fn(f64) -> f64>(f: &F, cuts: &[f64], tol: f64) -> Result<Quadrature> {
    const MAX_PANELS: usize = 20_000;
    let span = cuts[cuts.len() - 1] - cuts[0];
    let mut stack: Vec<(f64, f64)> = cuts.windows(2).map(|w| (w[0], w[1])).collect();
    stack.reverse();
    let mut total = 0.0;
    let mut err = 0.0;
    let mut panels = 0usize;
    while let Some((a, b)) = stack.pop() {
        let coarse = legendre_rule(10).integrate(a, b, f);
        let fine = legendre_rule(20).integrate(a, b, f);
        let diff = (fine - coarse).abs();
        let budget = tol * (b - a) / span;
        if diff <= budget || (b - a) < 1e-9 * span || panels >= MAX_PANELS {
            total += fine;
            err += diff;
            panels += 1;
        } else {
            let m = 0.5 * (a + b);
            stack.push((m, b));
            stack.push((a, m));
        }
    }
    if err > tol {
        return Err(Error::QuadratureNonConvergence { achieved: err });
    }
    Ok(Quadrature {
        value: total,
        error_estimate: err,
        method: QuadratureMethod::AdaptiveLegendre,
        size: panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_helpers() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-14);
        assert!((norm_sf(8.0) - 6.220960574271785e-16).abs() < 1e-28);
        for p in [1e-10, 0.01, 0.3, 0.5, 0.9, 1.0 - 1e-9] {
            assert!((norm_cdf(norm_quantile(p)) - p).abs() < 1e-14 * p.max(1e-3));
        }
    }

    #[test]
    fn hermite_moments() {
        assert!((gauss_hermite_expectation(|z| z * z, 8) - 1.0).abs() < 1e-14);
        assert!((gauss_hermite_expectation(|z| z.powi(4), 8) - 3.0).abs() < 1e-13);
        // E[Φ(Z)] = 1/2
        let q = normal_expectation(norm_cdf, 1e-12, &[], 1.0).unwrap();
        assert!((q.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sharp_step_uses_fallback() {
        // E[Φ((0.3 - Z) / 1e-3)] → Φ(0.3) as the step sharpens
        let s = 1e-3;
        let exact = norm_cdf(0.3 / (1.0f64 + s * s).sqrt());
        let q = normal_expectation(|z| norm_cdf((0.3 - z) / s), 1e-10, &[0.3], s).unwrap();
        assert_eq!(q.method, QuadratureMethod::AdaptiveLegendre);
        assert!((q.value - exact).abs() < 1e-10, "{} vs {exact}", q.value);
    }
}
