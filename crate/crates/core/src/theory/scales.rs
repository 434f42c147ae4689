//! Fixed points, depth scales and multi-layer theory traces.

use super::maps::{chi_unchecked, correlation_step, mean_square_activation, variance_step};
use super::{chi1_variance_slope, MfParams};
use crate::error::{invalid, Error, Result};
use crate::quadrature::QuadratureRule;
use crate::scalar::Scalar;

/// Damping of the fixed-point iteration `q ← q + damping·(V(q) - q)`.
pub const FIXED_POINT_DAMPING: f64 = 0.5;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Multipliers at or above `1 - CRITICAL_MARGIN` give an infinite depth scale.
pub const CRITICAL_MARGIN: f64 = 1e-12;

/// Fixed point `q*` of the variance map, starting from `q = 1`.
///
/// Converged means `|V(q) - q| <= tol · min(1, q)`: absolute for large
/// variances and relative for small ones.
pub fn fixed_point_q<T: Scalar>(params: &MfParams<T>, rule: &QuadratureRule<T>, tol: T, max_iter: usize) -> Result<T> {
    fixed_point_q_from(T::one(), params, rule, tol, max_iter)
}

pub fn fixed_point_q_from<T: Scalar>(
    q0: T,
    params: &MfParams<T>,
    rule: &QuadratureRule<T>,
    tol: T,
    max_iter: usize,
) -> Result<T> {
    if !(tol > T::zero()) {
        return Err(invalid(format!("tol must be > 0, got {tol}")));
    }
    if !(q0 >= T::zero()) || !q0.is_finite() {
        return Err(invalid(format!("start variance must be >= 0, got {q0}")));
    }
    let converged = |q: T, r: T| r.abs() <= tol * q.min(T::one());
    let damping = T::lit(FIXED_POINT_DAMPING);

    let mut q = q0;
    let mut residual = variance_step(q, params, rule) - q;
    let mut prev = (q, residual);
    for _ in 0..max_iter {
        if converged(q, residual) {
            return Ok(polish(q, residual, prev, params, rule));
        }
        prev = (q, residual);
        q = (q + damping * residual).max(T::zero());
        residual = variance_step(q, params, rule) - q;
    }
    if converged(q, residual) {
        return Ok(polish(q, residual, prev, params, rule));
    }
    bisect_fixed_point(params, rule, tol).ok_or(Error::NonConvergence {
        last: q.to_f64_lossy(),
        residual: residual.to_f64_lossy(),
    })
}

/// A few secant steps on `V(q) - q`, kept only while the residual shrinks.
/// Near-critical maps contract slowly, so a small residual alone can leave
/// `q` far from the root.
fn polish<T: Scalar>(mut q: T, mut r: T, mut prev: (T, T), params: &MfParams<T>, rule: &QuadratureRule<T>) -> T {
    for _ in 0..4 {
        let (q_old, r_old) = prev;
        if r == T::zero() || r == r_old || q == q_old {
            break;
        }
        let next = q - r * (q - q_old) / (r - r_old);
        if !(next > T::zero()) || !next.is_finite() {
            break;
        }
        let r_next = variance_step(next, params, rule) - next;
        if !(r_next.abs() < r.abs()) {
            break;
        }
        prev = (q, r);
        q = next;
        r = r_next;
    }
    q
}

/// Bisection on `g(q) = V(q) - q`, which is `σ_b² >= 0` at zero and negative
/// beyond the bound `(σ_m² + σ_b²)/(1 - σ_m²)` of the map.
fn bisect_fixed_point<T: Scalar>(params: &MfParams<T>, rule: &QuadratureRule<T>, tol: T) -> Option<T> {
    let g = |q: T| variance_step(q, params, rule) - q;
    if params.sigma_b2 == T::zero() && g(T::epsilon()) <= T::zero() {
        return Some(T::zero());
    }
    let mut lo = if params.sigma_b2 == T::zero() {
        T::epsilon()
    } else {
        T::zero()
    };
    let mut hi = (params.sigma_m2 + params.sigma_b2) / (T::one() - params.sigma_m2) + T::one();
    if g(lo) < T::zero() || g(hi) > T::zero() {
        return None;
    }
    for _ in 0..2000 {
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = T::lit(0.5) * (lo + hi);
    (g(q).abs() <= tol * q.min(T::one()).max(T::epsilon())).then_some(q)
}

/// Maps a linear multiplier onto a depth scale `-1/ln m`.
pub fn depth_scale<T: Scalar>(multiplier: T) -> T {
    if multiplier >= T::one() - T::lit(CRITICAL_MARGIN) {
        T::infinity()
    } else if multiplier <= T::zero() {
        T::zero()
    } else {
        -T::one() / multiplier.ln()
    }
}

/// Stable fixed point of the correlation map at `q_star`.
///
/// `c* = 1` whenever `χ(1) < 1`; otherwise iterate from `c = 0.5` and
/// `c = 0.99` and take the common limit.
pub fn correlation_fixed_point<T: Scalar>(
    q_star: T,
    params: &MfParams<T>,
    rule: &QuadratureRule<T>,
    tol: T,
    max_iter: usize,
) -> Result<T> {
    let chi1 = chi_unchecked(T::one(), q_star, params, rule);
    if chi1 < T::one() - T::lit(CRITICAL_MARGIN) || q_star == T::zero() {
        return Ok(T::one());
    }
    if chi1 <= T::one() + T::lit(CRITICAL_MARGIN) {
        // Critical: c = 1 is marginal and the only candidate.
        return Ok(T::one());
    }
    let iterate = |mut c: T| -> Result<T> {
        let mut step = T::infinity();
        for _ in 0..max_iter {
            let next = correlation_step(c, q_star, params, rule).min(T::one()).max(-T::one());
            step = next - c;
            c = next;
            if step.abs() <= tol {
                return Ok(c);
            }
        }
        Err(Error::NonConvergence {
            last: c.to_f64_lossy(),
            residual: step.to_f64_lossy(),
        })
    };
    let low = iterate(T::lit(0.5))?;
    let high = iterate(T::lit(0.99))?;
    if (low - high).abs() > T::lit(1e-6) {
        return Err(invalid(format!(
            "correlation map has two attracting points {low} and {high}"
        )));
    }
    Ok(low)
}

/// Summary of the signal propagation at one hyperparameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthScales<T> {
    pub q_star: T,
    pub c_star: T,
    pub chi_cstar: T,
    pub chi1: T,
    /// Linear multiplier of the variance map at `q*`.
    pub variance_multiplier: T,
    pub xi_q: T,
    pub xi_c: T,
}

pub fn depth_scales<T: Scalar>(params: &MfParams<T>, rule: &QuadratureRule<T>) -> Result<DepthScales<T>> {
    let tol = T::lit(DEFAULT_TOL);
    let q_star = fixed_point_q(params, rule, tol, DEFAULT_MAX_ITER)?;
    let c_star = correlation_fixed_point(q_star, params, rule, tol, DEFAULT_MAX_ITER)?;
    let chi_cstar = chi_unchecked(c_star, q_star, params, rule);
    let chi1 = chi_unchecked(T::one(), q_star, params, rule);
    let variance_multiplier = chi1_variance_slope(q_star, params, rule)?;
    Ok(DepthScales {
        q_star,
        c_star,
        chi_cstar,
        chi1,
        variance_multiplier,
        xi_q: depth_scale(variance_multiplier),
        xi_c: depth_scale(chi_cstar),
    })
}

/// Per-layer `(q_aa, q_bb, c_ab)`, index 0 being the input.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecursionTrace<T> {
    pub q_aa: Vec<T>,
    pub q_bb: Vec<T>,
    pub c_ab: Vec<T>,
}

impl<T: Scalar> RecursionTrace<T> {
    fn start(q_aa: T, q_bb: T, c: T) -> Self {
        Self {
            q_aa: vec![q_aa],
            q_bb: vec![q_bb],
            c_ab: vec![c],
        }
    }

    fn push(&mut self, (q_aa, q_bb, c): (T, T, T)) {
        self.q_aa.push(q_aa);
        self.q_bb.push(q_bb);
        self.c_ab.push(c);
    }

    /// Number of layers after the input.
    pub fn depth(&self) -> usize {
        self.q_aa.len().saturating_sub(1)
    }
}

fn check_inputs<T: Scalar>(q0_aa: T, q0_bb: T, c0: T) -> Result<()> {
    if !(q0_aa >= T::zero()) || !(q0_bb >= T::zero()) {
        return Err(invalid(format!("input variances must be >= 0, got {q0_aa}, {q0_bb}")));
    }
    if !(c0.abs() <= T::one()) {
        return Err(invalid(format!("input correlation must lie in [-1, 1], got {c0}")));
    }
    Ok(())
}

fn correlation_from<T: Scalar>(cov: T, q_aa: T, q_bb: T) -> T {
    let norm = (q_aa * q_bb).sqrt();
    if norm > T::zero() {
        (cov / norm).min(T::one()).max(-T::one())
    } else {
        T::one()
    }
}

/// One hidden layer acting on a pair of signals. With `q_aa = q_bb` this is
/// exactly `variance_map` followed by the correlation recursion.
pub(crate) fn hidden_step<T: Scalar>(
    (q_aa, q_bb, c): (T, T, T),
    params: &MfParams<T>,
    rule: &QuadratureRule<T>,
) -> (T, T, T) {
    let one = T::one();
    let a_a = params.sigma_m2 * mean_square_activation(q_aa, params, rule);
    let a_b = params.sigma_m2 * mean_square_activation(q_bb, params, rule);
    let next_aa = (a_a + params.sigma_b2) / (one - a_a);
    let next_bb = (a_b + params.sigma_b2) / (one - a_b);
    let cross = rule.pair_expect(q_aa, q_bb, c, |u| params.psi(u), |u| params.psi(u));
    let cov = (params.sigma_m2 * cross + params.sigma_b2) / ((one - a_a) * (one - a_b)).sqrt();
    (next_aa, next_bb, correlation_from(cov, next_aa, next_bb))
}

/// First layer fed by deterministic inputs `x⁰`, whose normalizer is
/// `Σ_j x_j² (1 - M_ij²)`; the self-averaged denominator is `N q⁰ (1 - σ_m²)`.
pub(crate) fn input_step<T: Scalar>((q_aa, q_bb, c): (T, T, T), params: &MfParams<T>) -> Result<(T, T, T)> {
    if !(q_aa > T::zero()) || !(q_bb > T::zero()) {
        return Err(Error::DegenerateVariance {
            layer: 1,
            unit: 0,
            variance: q_aa.min(q_bb).to_f64_lossy(),
        });
    }
    let keep = T::one() - params.sigma_m2;
    let next_aa = (params.sigma_m2 * q_aa + params.sigma_b2) / (keep * q_aa);
    let next_bb = (params.sigma_m2 * q_bb + params.sigma_b2) / (keep * q_bb);
    let norm = (q_aa * q_bb).sqrt();
    let cov = (params.sigma_m2 * c * norm + params.sigma_b2) / (keep * norm);
    Ok((next_aa, next_bb, correlation_from(cov, next_aa, next_bb)))
}

/// Iterates the hidden-layer maps `depth` times from layer-0 fields of
/// variance `q0_aa`, `q0_bb` and correlation `c0`.
pub fn iterate_theory<T: Scalar>(
    params: &MfParams<T>,
    q0_aa: T,
    q0_bb: T,
    c0: T,
    depth: usize,
    rule: &QuadratureRule<T>,
) -> Result<RecursionTrace<T>> {
    check_inputs(q0_aa, q0_bb, c0)?;
    let mut trace = RecursionTrace::start(q0_aa, q0_bb, c0);
    let mut state = (q0_aa, q0_bb, c0);
    for _ in 0..depth {
        state = hidden_step(state, params, rule);
        trace.push(state);
    }
    Ok(trace)
}

/// Like [`iterate_theory`] but for a network whose first layer consumes raw
/// inputs of second moments `q0_aa`, `q0_bb` and correlation `c0`, as the
/// simulator and the trainable network do.
pub fn iterate_theory_from_inputs<T: Scalar>(
    params: &MfParams<T>,
    q0_aa: T,
    q0_bb: T,
    c0: T,
    depth: usize,
    rule: &QuadratureRule<T>,
) -> Result<RecursionTrace<T>> {
    check_inputs(q0_aa, q0_bb, c0)?;
    let mut trace = RecursionTrace::start(q0_aa, q0_bb, c0);
    if depth == 0 {
        return Ok(trace);
    }
    let mut state = input_step((q0_aa, q0_bb, c0), params)?;
    trace.push(state);
    for _ in 1..depth {
        state = hidden_step(state, params, rule);
        trace.push(state);
    }
    Ok(trace)
}
