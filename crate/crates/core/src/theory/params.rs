use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Gain of the logistic-probit matching, `√(8/π)`.
pub const PROBIT_KAPPA: f64 = 1.595_769_121_605_730_7;

/// Pointwise nonlinearity family. The effective activation is `ψ(h) = φ(κh)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    TanH,
}

/// Hyperparameters of the random Gaussian-binary network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfParams<T> {
    /// Variance of the weight means, in `[0, 1)`.
    pub sigma_m2: T,
    /// Bias variance per unit of fan-in.
    pub sigma_b2: T,
    /// Activation gain.
    pub kappa: T,
    pub activation: Activation,
}

impl<T: Scalar> MfParams<T> {
    /// Unit gain, `ψ = tanh`.
    pub fn new(sigma_m2: T, sigma_b2: T) -> Result<Self> {
        Self {
            sigma_m2,
            sigma_b2,
            kappa: T::one(),
            activation: Activation::TanH,
        }
        .validated()
    }

    pub fn with_kappa(mut self, kappa: T) -> Result<Self> {
        self.kappa = kappa;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.sigma_m2 >= T::zero() && self.sigma_m2 < T::one()) {
            return Err(invalid(format!("sigma_m2 must lie in [0, 1), got {}", self.sigma_m2)));
        }
        if !(self.sigma_b2 >= T::zero()) || !self.sigma_b2.is_finite() {
            return Err(invalid(format!("sigma_b2 must be >= 0, got {}", self.sigma_b2)));
        }
        if !(self.kappa > T::zero()) || !self.kappa.is_finite() {
            return Err(invalid(format!("kappa must be > 0, got {}", self.kappa)));
        }
        Ok(self)
    }

    /// Width of the region where `ψ` turns over, `1/κ`.
    pub fn width(&self) -> T {
        T::one() / self.kappa
    }

    #[inline]
    pub fn psi(&self, h: T) -> T {
        match self.activation {
            Activation::TanH => (self.kappa * h).tanh(),
        }
    }

    #[inline]
    pub fn dpsi(&self, h: T) -> T {
        match self.activation {
            Activation::TanH => {
                let t = (self.kappa * h).tanh();
                self.kappa * (T::one() - t * t)
            }
        }
    }

    #[inline]
    pub fn d2psi(&self, h: T) -> T {
        match self.activation {
            Activation::TanH => {
                let t = (self.kappa * h).tanh();
                -T::lit(2.0) * self.kappa * self.kappa * t * (T::one() - t * t)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(MfParams::new(1.0, 0.0).is_err());
        assert!(MfParams::new(-0.1, 0.0).is_err());
        assert!(MfParams::new(0.5, -1e-3).is_err());
        assert!(MfParams::new(0.5, 0.0).unwrap().with_kappa(0.0).is_err());
        assert!(MfParams::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn probit_gain_constant() {
        assert!((PROBIT_KAPPA - (8.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = MfParams::new(0.5, 0.0).unwrap().with_kappa(PROBIT_KAPPA).unwrap();
        let eps = 1e-6;
        for &h in &[-1.3, -0.2, 0.0, 0.4, 2.0] {
            let fd1 = (p.psi(h + eps) - p.psi(h - eps)) / (2.0 * eps);
            let fd2 = (p.dpsi(h + eps) - p.dpsi(h - eps)) / (2.0 * eps);
            assert!((fd1 - p.dpsi(h)).abs() < 1e-8);
            assert!((fd2 - p.d2psi(h)).abs() < 1e-7);
        }
    }
}
