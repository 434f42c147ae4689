//! Baseline maps for an ordinary `tanh` network with Gaussian weights
//! `W ~ N(0, σ_w²/N)` and biases `b ~ N(0, σ_b²)`.

use crate::error::{invalid, Error, Result};
use crate::quadrature::QuadratureRule;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousParams<T> {
    pub sigma_w2: T,
    pub sigma_b2: T,
}

impl<T: Scalar> ContinuousParams<T> {
    pub fn new(sigma_w2: T, sigma_b2: T) -> Result<Self> {
        if !(sigma_w2 >= T::zero()) || !(sigma_b2 >= T::zero()) {
            return Err(invalid(format!(
                "continuous variances must be >= 0, got sigma_w2={sigma_w2}, sigma_b2={sigma_b2}"
            )));
        }
        Ok(Self { sigma_w2, sigma_b2 })
    }
}

fn sech2<T: Scalar>(u: T) -> T {
    let t = u.tanh();
    T::one() - t * t
}

/// `q' = σ_w² ∫Dz tanh²(√q z) + σ_b²`.
pub fn continuous_variance_map<T: Scalar>(
    q_prev: T,
    params: &ContinuousParams<T>,
    rule: &QuadratureRule<T>,
) -> Result<T> {
    if !(q_prev >= T::zero()) {
        return Err(invalid(format!("q_prev must be >= 0, got {q_prev}")));
    }
    Ok(params.sigma_w2 * rule.expect_field(q_prev, T::one(), |u| u.tanh().powi(2)) + params.sigma_b2)
}

/// `c' = (σ_w² ∫Dz₁Dz₂ tanh(u_a) tanh(u_b) + σ_b²) / q*`.
pub fn continuous_correlation_map<T: Scalar>(
    c_prev: T,
    q_star: T,
    params: &ContinuousParams<T>,
    rule: &QuadratureRule<T>,
) -> Result<T> {
    if c_prev.abs() > T::one() {
        return Err(invalid(format!("correlation must lie in [-1, 1], got {c_prev}")));
    }
    if !(q_star > T::zero()) {
        return Err(invalid(format!("q_star must be > 0, got {q_star}")));
    }
    let cross = rule.pair_expect_field(q_star, q_star, c_prev, T::one(), |u| u.tanh(), |u| u.tanh());
    Ok((params.sigma_w2 * cross + params.sigma_b2) / q_star)
}

/// `χ = σ_w² ∫Dz₁Dz₂ tanh'(u_a) tanh'(u_b)`.
pub fn continuous_chi<T: Scalar>(c: T, q_star: T, params: &ContinuousParams<T>, rule: &QuadratureRule<T>) -> Result<T> {
    if c.abs() > T::one() {
        return Err(invalid(format!("correlation must lie in [-1, 1], got {c}")));
    }
    if !(q_star >= T::zero()) {
        return Err(invalid(format!("q_star must be >= 0, got {q_star}")));
    }
    Ok(params.sigma_w2 * rule.pair_expect_field(q_star, q_star, c, T::one(), sech2, sech2))
}

/// Fixed point of the continuous variance map by plain iteration.
pub fn continuous_fixed_point_q<T: Scalar>(
    params: &ContinuousParams<T>,
    rule: &QuadratureRule<T>,
    tol: T,
    max_iter: usize,
) -> Result<T> {
    let mut q = T::one();
    let mut residual = T::infinity();
    for _ in 0..max_iter {
        let next = continuous_variance_map(q, params, rule)?;
        residual = next - q;
        q = next;
        if residual.abs() <= tol * q.min(T::one()) || (q == T::zero() && residual == T::zero()) {
            return Ok(q);
        }
    }
    Err(Error::NonConvergence {
        last: q.to_f64_lossy(),
        residual: residual.to_f64_lossy(),
    })
}
