//! Sample statistics used by the simulator and the verification suite.

use crate::scalar::Scalar;

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one sample).
pub fn mean_std<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = xs.len();
    if n == 0 {
        return (T::nan(), T::nan());
    }
    let nf = T::from_usize_lossy(n);
    let mean = xs.iter().copied().sum::<T>() / nf;
    if n == 1 {
        return (mean, T::zero());
    }
    let ss = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>();
    (mean, (ss / (nf - T::one())).sqrt())
}

/// Mean, variance, skewness and excess kurtosis (population moments).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn moments<T: Scalar>(xs: &[T]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|x| x.to_f64_lossy()).sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x.to_f64_lossy() - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    Moments {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_has_zero_spread() {
        assert_eq!(mean_std(&[3.0f64]), (3.0, 0.0));
    }

    #[test]
    fn known_moments() {
        let (m, s) = mean_std(&[1.0f64, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let mo = moments(&[-1.0f64, 1.0]);
        assert_eq!(mo.skewness, 0.0);
        assert!((mo.excess_kurtosis + 2.0).abs() < 1e-15);
    }
}
