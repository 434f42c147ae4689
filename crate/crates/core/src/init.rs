//! Random initialization of weight means and biases.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

/// Distribution of the weight means at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanInit {
    /// `M = ±σ_m` with equal probability.
    #[default]
    SymmetricBernoulli,
    /// `M = clamp(N(0, σ_m²), -1, 1)`.
    ClippedGaussian,
}

impl MeanInit {
    /// `E[M²]` actually realized by the scheme for nominal variance `sigma_m2`.
    pub fn effective_variance(self, sigma_m2: f64) -> f64 {
        match self {
            MeanInit::SymmetricBernoulli => sigma_m2,
            MeanInit::ClippedGaussian => clipped_gaussian_second_moment(sigma_m2.sqrt()),
        }
    }
}

impl std::str::FromStr for MeanInit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "symmetricbernoulli" | "bernoulli" => Ok(MeanInit::SymmetricBernoulli),
            "clippedgaussian" | "gaussian" => Ok(MeanInit::ClippedGaussian),
            other => Err(format!("unknown mean init '{other}'")),
        }
    }
}

impl std::fmt::Display for MeanInit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MeanInit::SymmetricBernoulli => "symmetric-bernoulli",
            MeanInit::ClippedGaussian => "clipped-gaussian",
        })
    }
}

/// `E[clamp(sZ, -1, 1)²]` for standard normal `Z`.
fn clipped_gaussian_second_moment(s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let a = 1.0 / s;
    let cdf = 0.5 * statrs::function::erf::erfc(-a / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
    s * s * ((2.0 * cdf - 1.0) - 2.0 * a * pdf) + 2.0 * (1.0 - cdf)
}

/// Draws a `rows × cols` matrix of means.
pub fn sample_means<T: Scalar, R: Rng>(
    rows: usize,
    cols: usize,
    sigma_m2: T,
    init: MeanInit,
    rng: &mut R,
) -> Array2<T> {
    let sigma = sigma_m2.sqrt();
    match init {
        MeanInit::SymmetricBernoulli => {
            let mut out = Array2::from_elem((rows, cols), sigma);
            let mut bits = 0u64;
            for (k, v) in out.iter_mut().enumerate() {
                if k % 64 == 0 {
                    bits = rng.random();
                }
                if bits & 1 == 1 {
                    *v = -sigma;
                }
                bits >>= 1;
            }
            out
        }
        MeanInit::ClippedGaussian => Array2::from_shape_simple_fn((rows, cols), || {
            let z: f64 = StandardNormal.sample(rng);
            (T::lit(z) * sigma).max(-T::one()).min(T::one())
        }),
    }
}

/// Draws biases `b ~ N(0, fan_in · σ_b²)`.
pub fn sample_biases<T: Scalar, R: Rng>(n: usize, fan_in: usize, sigma_b2: T, rng: &mut R) -> Array1<T> {
    let scale = (T::from_usize_lossy(fan_in) * sigma_b2).sqrt();
    if scale == T::zero() {
        return Array1::zeros(n);
    }
    Array1::from_shape_simple_fn(n, || {
        let z: f64 = StandardNormal.sample(rng);
        T::lit(z) * scale
    })
}
