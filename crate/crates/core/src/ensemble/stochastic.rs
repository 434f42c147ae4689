//! Direct samples of the stochastic-binary preactivation `h = Σ_j S_j x_j + b`.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::rng::{stream, StreamKind};
use crate::scalar::Scalar;

#[inline]
fn spin<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    if rng.random::<f64>() < 0.5 * (1.0 + mean) {
        1.0
    } else {
        -1.0
    }
}

/// Draws `n_samples` fields with independent `±1` weights `S_j` of mean
/// `m_row[j]` and `±1` inputs `x_j` of mean `x_mean[j]`.
pub fn stochastic_binary_field_sample<T: Scalar>(
    m_row: &[T],
    x_mean: &[T],
    b: T,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if m_row.len() != x_mean.len() {
        return Err(invalid(format!("{} means but {} inputs", m_row.len(), x_mean.len())));
    }
    let m: Vec<f64> = m_row.iter().map(|v| v.to_f64_lossy()).collect();
    let x: Vec<f64> = x_mean.iter().map(|v| v.to_f64_lossy()).collect();
    if m.iter().chain(&x).any(|v| !(v.abs() <= 1.0)) {
        return Err(invalid("means must lie in [-1, 1]"));
    }
    let mut rng = stream(seed, 0, 0, StreamKind::BinarySample);
    let b = b.to_f64_lossy();
    Ok((0..n_samples)
        .map(|_| {
            let mut h = b;
            for (&mj, &xj) in m.iter().zip(&x) {
                let s = if mj.abs() == 1.0 { mj } else { spin(&mut rng, mj) };
                h += s * spin(&mut rng, xj);
            }
            T::lit(h)
        })
        .collect())
}
