//! Single-layer Jacobians and their mean squared singular value.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{sample_layer, EnsembleConfig, RandomNetwork};
use crate::error::{invalid, Error, Result};
use crate::layer::{LayerInput, MeanLayer};
use crate::quadrature::QuadratureRule;
use crate::rng::{stream, StreamKind};
use crate::scalar::Scalar;
use crate::stats::mean_std;
use crate::theory::{chi, fixed_point_q, MfParams, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// `J_ij = ∂h_i/∂h_j^{prev}` of hidden layer `layer_index` (0-based, so the
/// first layer, which reads raw inputs, is excluded).
///
/// ```text
/// J_ij = ψ'(h_j) (M_ij / √Σ_i + M_ij² h̄_i ψ(h_j) / Σ_i^{3/2})
/// ```
pub fn single_layer_jacobian<T: Scalar>(
    net: &RandomNetwork<T>,
    layer_index: usize,
    x_prev: ArrayView1<T>,
) -> Result<Array2<T>> {
    if layer_index == 0 || layer_index >= net.depth() {
        return Err(invalid(format!(
            "layer_index must be in 1..{}, got {layer_index}",
            net.depth()
        )));
    }
    layer_jacobian(&net.layers[layer_index], &net.params, x_prev, layer_index + 1)
}

pub(crate) fn layer_jacobian<T: Scalar>(
    layer: &MeanLayer<T>,
    params: &MfParams<T>,
    x_prev: ArrayView1<T>,
    label: usize,
) -> Result<Array2<T>> {
    let a = x_prev.mapv(|h| params.psi(h));
    let da = x_prev.mapv(|h| params.dpsi(h));
    let fields = layer.forward(a.view().insert_axis(Axis(0)), LayerInput::Activations, label)?;
    let mut jac = layer.means.clone();
    for (i, mut row) in jac.axis_iter_mut(Axis(0)).enumerate() {
        let sigma = fields.sigma[[0, i]];
        let inv_sqrt = T::one() / sigma.sqrt();
        let corr = fields.h[[0, i]] / sigma;
        for (j, m) in row.iter_mut().enumerate() {
            *m = da[j] * (*m * inv_sqrt + *m * *m * corr * a[j]);
        }
    }
    Ok(jac)
}

/// `trace(JᵀJ) / ncols`, the exact mean squared singular value.
pub fn exact_msv<T: Scalar>(jac: &Array2<T>) -> T {
    jac.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(jac.ncols())
}

/// Monte-Carlo mean of `‖Ju‖² / ‖u‖²` over `n_probes` isotropic probes.
pub fn jacobian_msv<T: Scalar>(
    net: &RandomNetwork<T>,
    layer_index: usize,
    x_prev: ArrayView1<T>,
    n_probes: usize,
    seed: u64,
) -> Result<T> {
    if n_probes == 0 {
        return Err(invalid("n_probes must be >= 1"));
    }
    let jac = single_layer_jacobian(net, layer_index, x_prev)?;
    Ok(probe_msv(&jac, n_probes, seed, layer_index))
}

fn probe_msv<T: Scalar>(jac: &Array2<T>, n_probes: usize, seed: u64, index: usize) -> T {
    let mut rng = stream(seed, index as u64, 0, StreamKind::Probes);
    let n = jac.ncols();
    let mut total = T::zero();
    for _ in 0..n_probes {
        let u = Array1::from_shape_simple_fn(n, || T::lit(StandardNormal.sample(&mut rng)));
        let ju = jac.dot(&u);
        total += ju.dot(&ju) / u.dot(&u);
    }
    total / T::from_usize_lossy(n_probes)
}

/// Summary of one width in the MSV experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsvSummary<T> {
    pub width: usize,
    pub chi_theory: T,
    pub msv_mean: T,
    pub msv_std: T,
    /// Mean over networks of `|MSV − χ|`.
    pub mean_abs_error: T,
    pub n_networks: usize,
}

/// MSV of a hidden layer at the variance fixed point, over `n_networks`
/// independent layers of the given width. Previous-layer fields are drawn
/// i.i.d. from `N(0, q*)`. `n_probes = None` uses the exact trace.
pub fn msv_experiment<T: Scalar>(
    width: usize,
    params: &MfParams<T>,
    n_networks: usize,
    n_probes: Option<usize>,
    seed: u64,
    rule: &QuadratureRule<T>,
) -> Result<MsvSummary<T>> {
    if width == 0 || n_networks == 0 {
        return Err(invalid("width and n_networks must be >= 1"));
    }
    if n_probes == Some(0) {
        return Err(invalid("n_probes must be >= 1"));
    }
    let q_star = fixed_point_q(params, rule, T::lit(DEFAULT_TOL), DEFAULT_MAX_ITER)?;
    let chi_theory = chi(T::one(), q_star, params, rule)?;
    let config = EnsembleConfig {
        width,
        depth: 2,
        n_realizations: n_networks,
        params: *params,
        mean_init: Default::default(),
        q0_aa: T::one(),
        q0_bb: T::one(),
        c0_ab: T::zero(),
        seed,
    };
    let sd = q_star.sqrt();
    let values: Vec<T> = (0..n_networks)
        .into_par_iter()
        .map(|r| {
            let layer = sample_layer(&config, r, 1);
            let mut rng = stream(seed, r as u64, 1, StreamKind::Fields);
            let x_prev = Array1::from_shape_simple_fn(width, || T::lit(StandardNormal.sample(&mut rng)) * sd);
            let jac = layer_jacobian(&layer, params, x_prev.view(), 2).map_err(|e| Error::Realization {
                index: r,
                source: Box::new(e),
            })?;
            Ok(match n_probes {
                None => exact_msv(&jac),
                Some(p) => probe_msv(&jac, p, seed, r),
            })
        })
        .collect::<Result<_>>()?;
    let (msv_mean, msv_std) = mean_std(&values);
    let mean_abs_error = values.iter().map(|&v| (v - chi_theory).abs()).sum::<T>() / T::from_usize_lossy(n_networks);
    Ok(MsvSummary {
        width,
        chi_theory,
        msv_mean,
        msv_std,
        mean_abs_error,
        n_networks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn net(layers: Vec<MeanLayer<f64>>, m: f64, b: f64) -> RandomNetwork<f64> {
        RandomNetwork {
            layers,
            params: MfParams::new(m, b).unwrap(),
        }
    }

    fn fd_jacobian(layer: &MeanLayer<f64>, p: &MfParams<f64>, x: &Array1<f64>) -> Array2<f64> {
        let eps = 1e-6;
        let n = x.len();
        let f = |x: &Array1<f64>| {
            let a = x.mapv(|h| p.psi(h)).insert_axis(Axis(0));
            layer
                .forward(a.view(), LayerInput::Activations, 2)
                .unwrap()
                .h
                .row(0)
                .to_owned()
        };
        let mut out = Array2::zeros((layer.fan_out(), n));
        for j in 0..n {
            let mut up = x.clone();
            up[j] += eps;
            let mut dn = x.clone();
            dn[j] -= eps;
            let col = (f(&up) - f(&dn)) / (2.0 * eps);
            out.column_mut(j).assign(&col);
        }
        out
    }

    #[test]
    fn zero_means_give_zero_jacobian() {
        let layer = MeanLayer::new(Array2::zeros((3, 3)), array![0.1, 0.2, 0.3]).unwrap();
        let n = net(vec![layer.clone(), layer], 0.0, 0.01);
        let jac = single_layer_jacobian(&n, 1, array![0.5, -0.2, 1.0].view()).unwrap();
        assert!(jac.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_layer_is_rejected() {
        let layer = MeanLayer::new(Array2::from_elem((2, 2), 0.3), Array1::zeros(2)).unwrap();
        let n = net(vec![layer.clone(), layer], 0.09, 0.0);
        assert!(single_layer_jacobian(&n, 0, array![0.1, 0.2].view()).is_err());
        assert!(single_layer_jacobian(&n, 2, array![0.1, 0.2].view()).is_err());
    }

    #[test]
    fn one_by_one_layer_by_hand() {
        // h = (m t + b) / √(1 - m² t²), t = tanh(x)
        // dh/dx = (1 - t²) [m / √(1 - m²t²) + m² t (m t + b) / (1 - m²t²)^{3/2}]
        let (m, b, x) = (0.8_f64, 0.3_f64, 0.7_f64);
        let layer = MeanLayer::new(array![[m]], array![b]).unwrap();
        let n = net(vec![layer.clone(), layer], 0.64, 0.0);
        let jac = single_layer_jacobian(&n, 1, array![x].view()).unwrap();
        let t = x.tanh();
        let s = 1.0 - m * m * t * t;
        let expected = (1.0 - t * t) * (m / s.sqrt() + m * m * t * (m * t + b) / s.powf(1.5));
        assert!((jac[[0, 0]] - expected).abs() < 1e-14);
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let p = MfParams::new(0.7, 0.05).unwrap();
        for seed in 0..5 {
            let config = EnsembleConfig {
                width: 20,
                depth: 2,
                n_realizations: 1,
                params: p,
                mean_init: crate::init::MeanInit::ClippedGaussian,
                q0_aa: 1.0,
                q0_bb: 1.0,
                c0_ab: 0.0,
                seed,
            };
            let layer = sample_layer(&config, 0, 1);
            let mut rng = stream(seed, 0, 0, StreamKind::Fields);
            let x = Array1::from_shape_simple_fn(20, || StandardNormal.sample(&mut rng));
            let got = layer_jacobian(&layer, &p, x.view(), 2).unwrap();
            let fd = fd_jacobian(&layer, &p, &x);
            for (g, f) in got.iter().zip(fd.iter()) {
                assert!((g - f).abs() <= 1e-5 * f.abs().max(1e-3), "{g} vs {f}");
            }
        }
    }

    #[test]
    fn exact_msv_of_orthogonal_matrix_is_one() {
        let (c, s) = (0.6_f64, 0.8_f64);
        let q = array![[c, -s], [s, c]];
        assert!((exact_msv(&q) - 1.0).abs() < 1e-15);
        // every probe is preserved in norm
        assert!((probe_msv(&q, 7, 3, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn probe_estimate_approaches_exact_trace() {
        let mut rng = stream(11, 0, 0, StreamKind::Fields);
        let jac = Array2::from_shape_simple_fn((30, 30), || StandardNormal.sample(&mut rng));
        let exact = exact_msv(&jac);
        let est: f64 = probe_msv(&jac, 4000, 5, 0);
        assert!(((est - exact) / exact).abs() < 0.03, "{est} vs {exact}");
    }

    #[test]
    fn zero_mean_variance_gives_zero_msv() {
        let p = MfParams::new(0.0, 0.01).unwrap();
        let rule = QuadratureRule::standard();
        let s = msv_experiment(50, &p, 3, None, 1, &rule).unwrap();
        assert_eq!(s.msv_mean, 0.0);
        assert_eq!(s.chi_theory, 0.0);
    }
}
