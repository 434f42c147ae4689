//! Layer-to-layer maps of the Gaussian-binary network.
//!
//! A hidden unit computes `h_i = (Σ_j M_ij ψ(h_j) + b_i) / √(Σ_j 1 - M_ij² ψ²(h_j))`.
//! Over random means of variance `σ_m²` and biases of variance `N σ_b²`, the
//! denominator self-averages to `N (1 - σ_m² E ψ²)`, which gives
//!
//! ```text
//! q'  = (σ_m² E ψ²(√q z) + σ_b²) / (1 - σ_m² E ψ²(√q z))
//! c'  = (1 + q')/q' · (σ_m² E[ψ(u_a) ψ(u_b)] + σ_b²) / (1 + σ_b²)
//! χ   = (1 + q*)/(1 + σ_b²) · σ_m² E[ψ'(u_a) ψ'(u_b)]
//! ```

use super::MfParams;
use crate::error::{invalid, Result};
use crate::quadrature::QuadratureRule;
use crate::scalar::Scalar;

fn check_variance<T: Scalar>(name: &str, q: T) -> Result<()> {
    if q >= T::zero() && q.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be a finite variance >= 0, got {q}")))
    }
}

fn check_correlation<T: Scalar>(c: T) -> Result<()> {
    if c.abs() <= T::one() {
        Ok(())
    } else {
        Err(invalid(format!("correlation must lie in [-1, 1], got {c}")))
    }
}

/// `E ψ²(√q z)` under the standard Gaussian measure.
pub fn e_phi2<T: Scalar>(q: T, params: &MfParams<T>, rule: &QuadratureRule<T>) -> Result<T> {
    check_variance("q", q)?;
    Ok(mean_square_activation(q, params, rule))
}

pub(crate) fn mean_square_activation<T: Scalar>(q: T, params: &MfParams<T>, rule: &QuadratureRule<T>) -> T {
    rule.expect_field(q, params.width(), |u| {
        let a = params.psi(u);
        a * a
    })
}

pub(crate) fn variance_step<T: Scalar>(q: T, params: &MfParams<T>, rule: &QuadratureRule<T>) -> T {
    let a = params.sigma_m2 * mean_square_activation(q, params, rule);
    (a + params.sigma_b2) / (T::one() - a)
}

/// Variance of the next layer's normalized fields given the previous one.
pub fn variance_map<T: Scalar>(q_prev: T, params: &MfParams<T>, rule: &QuadratureRule<T>) -> Result<T> {
    check_variance("q_prev", q_prev)?;
    Ok(variance_step(q_prev, params, rule))
}

/// Correlation map evaluated on the fixed-point variance `q_star`.
pub fn correlation_map<T: Scalar>(c_prev: T, q_star: T, params: &MfParams<T>, rule: &QuadratureRule<T>) -> Result<T> {
    check_correlation(c_prev)?;
    if !(q_star > T::zero()) || !q_star.is_finite() {
        return Err(invalid(format!("correlation_map needs q_star > 0, got {q_star}")));
    }
    Ok(correlation_step(c_prev, q_star, params, rule))
}

pub(crate) fn correlation_step<T: Scalar>(c: T, q: T, params: &MfParams<T>, rule: &QuadratureRule<T>) -> T {
    let cross = rule.pair_expect_field(q, q, c, params.width(), |u| params.psi(u), |u| params.psi(u));
    (T::one() + q) / q * (params.sigma_m2 * cross + params.sigma_b2) / (T::one() + params.sigma_b2)
}

/// Slope `∂c'/∂c` of the correlation map at variance `q_star`.
pub fn chi<T: Scalar>(c: T, q_star: T, params: &MfParams<T>, rule: &QuadratureRule<T>) -> Result<T> {
    check_correlation(c)?;
    check_variance("q_star", q_star)?;
    Ok(chi_unchecked(c, q_star, params, rule))
}

pub(crate) fn chi_unchecked<T: Scalar>(c: T, q: T, params: &MfParams<T>, rule: &QuadratureRule<T>) -> T {
    if params.sigma_m2 == T::zero() {
        return T::zero();
    }
    let slopes = rule.pair_expect_field(q, q, c, params.width(), |u| params.dpsi(u), |u| params.dpsi(u));
    (T::one() + q) / (T::one() + params.sigma_b2) * params.sigma_m2 * slopes
}

/// Linear multiplier `ε^{ℓ+1}/ε^ℓ` of the variance map around its fixed point,
/// for `q = q* + ε`.
///
/// Expressed through `χ₁ = χ(c = 1)` and the curvature integral
/// `∫Dz ψ''(√q* z) ψ(√q* z)`:
/// `(1 + q*) · [χ₁ + (1 + q*)/(1 + σ_b²) σ_m² ∫Dz ψ'' ψ]`.
pub fn chi1_variance_slope<T: Scalar>(q_star: T, params: &MfParams<T>, rule: &QuadratureRule<T>) -> Result<T> {
    check_variance("q_star", q_star)?;
    if params.sigma_m2 == T::zero() {
        return Ok(T::zero());
    }
    let one = T::one();
    let chi1 = chi_unchecked(one, q_star, params, rule);
    let curvature = rule.expect_field(q_star, params.width(), |u| params.d2psi(u) * params.psi(u));
    let bracket = chi1 + (one + q_star) / (one + params.sigma_b2) * params.sigma_m2 * curvature;
    Ok((one + q_star) * bracket)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::PROBIT_KAPPA;
    use approx::assert_abs_diff_eq;

    fn rule() -> QuadratureRule<f64> {
        QuadratureRule::standard()
    }

    /// Independent 1-D oracle: trapezoid over z in [-10, 10], step 1e-4.
    fn trapezoid(f: impl Fn(f64) -> f64) -> f64 {
        let h = 1e-4;
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let g = |z: f64| f(z) * (-0.5 * z * z).exp() * norm;
        let mut acc = 0.5 * (g(-10.0) + g(10.0));
        for k in 1..200_000 {
            acc += g(-10.0 + k as f64 * h);
        }
        acc * h
    }

    /// Independent 2-D oracle: trapezoid on [-8, 8]², step 1e-2.
    fn trapezoid2(f: impl Fn(f64, f64) -> f64) -> f64 {
        let h = 1e-2;
        let n = 1600;
        let norm = 1.0 / (2.0 * std::f64::consts::PI);
        let mut acc = 0.0;
        for i in 0..=n {
            let z1 = -8.0 + i as f64 * h;
            let wi = if i == 0 || i == n { 0.5 } else { 1.0 };
            let g1 = (-0.5 * z1 * z1).exp();
            for j in 0..=n {
                let z2 = -8.0 + j as f64 * h;
                let wj = if j == 0 || j == n { 0.5 } else { 1.0 };
                acc += wi * wj * f(z1, z2) * g1 * (-0.5 * z2 * z2).exp();
            }
        }
        acc * h * h * norm
    }

    fn oracle_e_phi2(q: f64, kappa: f64) -> f64 {
        trapezoid(|z| (kappa * q.sqrt() * z).tanh().powi(2))
    }

    #[test]
    fn e_phi2_edge_values() {
        let p = MfParams::new(0.5, 0.0).unwrap();
        assert_eq!(e_phi2(0.0, &p, &rule()).unwrap(), 0.0);
        let big = e_phi2(1e8, &p, &rule()).unwrap();
        assert!(big > 0.9999 && big < 1.0);
        assert!(e_phi2(-1.0, &p, &rule()).is_err());
    }

    #[test]
    fn e_phi2_matches_oracle_with_probit_gain() {
        let p = MfParams::new(0.5, 0.0).unwrap().with_kappa(PROBIT_KAPPA).unwrap();
        let expected = oracle_e_phi2(1.0, PROBIT_KAPPA);
        let fine = QuadratureRule::gauss_hermite(257).unwrap();
        assert_abs_diff_eq!(e_phi2(1.0, &p, &fine).unwrap(), expected, epsilon = 1e-10);
        assert_abs_diff_eq!(e_phi2(1.0, &p, &rule()).unwrap(), expected, epsilon = 1e-7);
    }

    #[test]
    fn e_phi2_is_monotone() {
        let p = MfParams::new(0.5, 0.0).unwrap();
        let mut prev = 0.0;
        for k in 0..200 {
            let q = 0.05 * k as f64;
            let v = e_phi2(q, &p, &rule()).unwrap();
            assert!(v >= prev && v < 1.0);
            prev = v;
        }
    }

    #[test]
    fn variance_map_trivial_cases() {
        let r = rule();
        let p = MfParams::new(0.0, 0.0).unwrap();
        assert_eq!(variance_map(3.0, &p, &r).unwrap(), 0.0);
        let p = MfParams::new(0.0, 0.5).unwrap();
        assert_eq!(variance_map(0.1, &p, &r).unwrap(), 0.5);
        assert_eq!(variance_map(7.0, &p, &r).unwrap(), 0.5);
    }

    #[test]
    fn variance_map_matches_oracle() {
        let p = MfParams::new(0.5, 0.001).unwrap();
        let a = 0.5 * oracle_e_phi2(1.0, 1.0);
        let expected = (a + 0.001) / (1.0 - a);
        assert_abs_diff_eq!(variance_map(1.0, &p, &rule()).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn correlation_map_matches_two_dimensional_oracle() {
        let p = MfParams::new(0.5, 0.001).unwrap();
        let q = 0.7f64;
        let c = 0.5;
        let s = (1.0f64 - c * c).sqrt();
        let cross = trapezoid2(|z1, z2| (q.sqrt() * z1).tanh() * (q.sqrt() * (c * z1 + s * z2)).tanh());
        let expected = (1.0 + q) / q * (0.5 * cross + 0.001) / 1.001;
        assert_abs_diff_eq!(correlation_map(c, q, &p, &rule()).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn correlation_map_rejects_bad_inputs() {
        let p = MfParams::new(0.5, 0.001).unwrap();
        assert!(correlation_map(0.5, 0.0, &p, &rule()).is_err());
        assert!(correlation_map(1.5, 0.3, &p, &rule()).is_err());
    }

    #[test]
    fn pure_bias_fields_are_perfectly_correlated() {
        let p = MfParams::new(0.0, 0.3).unwrap();
        for &c in &[-0.9, 0.0, 0.4] {
            let got = correlation_map(c, 0.3, &p, &rule()).unwrap();
            assert_abs_diff_eq!(got, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn chi_vanishes_without_mean_variance() {
        let p = MfParams::new(0.0, 0.3).unwrap();
        assert_eq!(chi(1.0, 0.3, &p, &rule()).unwrap(), 0.0);
        assert_eq!(chi1_variance_slope(0.3, &p, &rule()).unwrap(), 0.0);
    }

    #[test]
    fn chi_matches_finite_difference_off_fixed_point() {
        let r = rule();
        let p = MfParams::new(0.8, 0.05).unwrap();
        let q = 0.4;
        let eps = 1e-5;
        for &c in &[-0.6, 0.0, 0.3, 0.9] {
            let fd = (correlation_map(c + eps, q, &p, &r).unwrap() - correlation_map(c - eps, q, &p, &r).unwrap())
                / (2.0 * eps);
            let got = chi(c, q, &p, &r).unwrap();
            assert!(((got - fd) / fd).abs() < 1e-6, "c={c}: {got} vs {fd}");
        }
    }

    #[test]
    fn variance_slope_matches_finite_difference_with_probit_gain() {
        // Away from unit gain the curvature term matters more.
        let r = rule();
        let p = MfParams::new(0.6, 0.2).unwrap().with_kappa(PROBIT_KAPPA).unwrap();
        let q = crate::theory::fixed_point_q(&p, &r, 1e-13, 10_000).unwrap();
        let h = 1e-5 * q;
        let fd = (variance_map(q + h, &p, &r).unwrap() - variance_map(q - h, &p, &r).unwrap()) / (2.0 * h);
        let got = chi1_variance_slope(q, &p, &r).unwrap();
        assert!(((got - fd) / fd).abs() < 1e-6, "{got} vs {fd}");
    }
}
