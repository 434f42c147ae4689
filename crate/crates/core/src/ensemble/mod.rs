//! Finite-width random networks used to check the mean-field theory.

mod jacobian;
mod stochastic;

pub use jacobian::{exact_msv, jacobian_msv, msv_experiment, single_layer_jacobian, MsvSummary};
pub use stochastic::stochastic_binary_field_sample;

use ndarray::{stack, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::init::{sample_biases, sample_means, MeanInit};
use crate::layer::{LayerInput, MeanLayer};
use crate::quadrature::QuadratureRule;
use crate::rng::{stream, StreamKind};
use crate::scalar::Scalar;
use crate::stats::mean_std;
use crate::theory::{iterate_theory_from_inputs, MfParams, RecursionTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig<T> {
    pub width: usize,
    pub depth: usize,
    pub n_realizations: usize,
    pub params: MfParams<T>,
    pub mean_init: MeanInit,
    pub q0_aa: T,
    pub q0_bb: T,
    pub c0_ab: T,
    pub seed: u64,
}

impl<T: Scalar> EnsembleConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 || self.n_realizations == 0 {
            return Err(invalid("width, depth and n_realizations must be >= 1"));
        }
        if !(self.c0_ab.abs() <= T::one()) {
            return Err(invalid(format!("c0_ab must lie in [-1, 1], got {}", self.c0_ab)));
        }
        if !(self.q0_aa > T::zero()) || !(self.q0_bb > T::zero()) {
            return Err(invalid("input variances must be > 0"));
        }
        self.params.validated().map(|_| ())
    }
}

/// A random network of square `width × width` layers.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomNetwork<T> {
    pub layers: Vec<MeanLayer<T>>,
    pub params: MfParams<T>,
}

impl<T: Scalar> RandomNetwork<T> {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    fn layer_kind(index: usize) -> LayerInput {
        if index == 0 {
            LayerInput::Deterministic
        } else {
            LayerInput::Activations
        }
    }
}

/// Layer `layer` of realization `realization`, reproducible on its own.
pub fn sample_layer<T: Scalar>(config: &EnsembleConfig<T>, realization: usize, layer: usize) -> MeanLayer<T> {
    let (r, l) = (realization as u64, layer as u64);
    let w = config.width;
    let means = sample_means(
        w,
        w,
        config.params.sigma_m2,
        config.mean_init,
        &mut stream(config.seed, r, l, StreamKind::Means),
    );
    let bias = sample_biases(
        w,
        w,
        config.params.sigma_b2,
        &mut stream(config.seed, r, l, StreamKind::Biases),
    );
    MeanLayer { means, bias }
}

pub fn sample_network<T: Scalar>(config: &EnsembleConfig<T>, realization_index: usize) -> RandomNetwork<T> {
    RandomNetwork {
        layers: (0..config.depth)
            .map(|l| sample_layer(config, realization_index, l))
            .collect(),
        params: config.params,
    }
}

fn input_pair_from<T: Scalar, R: Rng>(
    rng: &mut R,
    dim: usize,
    q0_aa: T,
    q0_bb: T,
    c0: T,
) -> Result<(Array1<T>, Array1<T>)> {
    if dim < 2 {
        return Err(invalid(format!("input pair needs dim >= 2, got {dim}")));
    }
    if !(c0.abs() <= T::one()) {
        return Err(invalid(format!("c0 must lie in [-1, 1], got {c0}")));
    }
    if !(q0_aa >= T::zero()) || !(q0_bb >= T::zero()) {
        return Err(invalid("input variances must be >= 0"));
    }
    let mut draw = || -> Array1<T> { Array1::from_shape_simple_fn(dim, || T::lit(StandardNormal.sample(&mut *rng))) };
    let n = T::from_usize_lossy(dim);
    let mut e1 = draw();
    e1 *= n.sqrt() / e1.dot(&e1).sqrt();
    let mut e2 = draw();
    let proj = e2.dot(&e1) / n;
    e2.scaled_add(-proj, &e1);
    e2 *= n.sqrt() / e2.dot(&e2).sqrt();

    let s = (T::one() - c0 * c0).max(T::zero()).sqrt();
    let xa = &e1 * q0_aa.sqrt();
    let mut xb = &e1 * (c0 * q0_bb.sqrt());
    xb.scaled_add(s * q0_bb.sqrt(), &e2);
    Ok((xa, xb))
}

/// Two inputs whose empirical second moments are exactly `q0_aa`, `q0_bb`
/// and `c0 √(q0_aa q0_bb)`, built by Gram–Schmidt on two Gaussian draws.
pub fn generate_input_pair<T: Scalar>(
    dim: usize,
    q0_aa: T,
    q0_bb: T,
    c0: T,
    seed: u64,
) -> Result<(Array1<T>, Array1<T>)> {
    input_pair_from(&mut stream(seed, 0, 0, StreamKind::Inputs), dim, q0_aa, q0_bb, c0)
}

/// Normalized fields of every layer for input `x0`; entry 0 is `x0` itself.
pub fn forward_fields<T: Scalar>(net: &RandomNetwork<T>, x0: ArrayView1<T>) -> Result<Vec<Array1<T>>> {
    let batch = x0.insert_axis(Axis(0)).to_owned();
    Ok(forward_batch(net.layers.iter(), &net.params, batch)?
        .into_iter()
        .map(|m| m.row(0).to_owned())
        .collect())
}

/// Applies layer `index` (0-based) to a batch of fields from the layer below.
fn step<T: Scalar>(layer: &MeanLayer<T>, index: usize, params: &MfParams<T>, prev: &Array2<T>) -> Result<Array2<T>> {
    let kind = RandomNetwork::<T>::layer_kind(index);
    let fields = match kind {
        LayerInput::Deterministic => layer.forward(prev.view(), kind, index + 1)?,
        LayerInput::Activations => layer.forward(prev.mapv(|h| params.psi(h)).view(), kind, index + 1)?,
    };
    Ok(fields.h)
}

fn forward_batch<'a, T: Scalar>(
    layers: impl Iterator<Item = &'a MeanLayer<T>>,
    params: &MfParams<T>,
    x0: Array2<T>,
) -> Result<Vec<Array2<T>>> {
    let mut out = vec![x0];
    for (l, layer) in layers.enumerate() {
        let next = step(layer, l, params, out.last().expect("non-empty"))?;
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerMoments<T> {
    pub q_aa: T,
    pub q_bb: T,
    pub c_ab: T,
}

/// Per-layer `q̂ = mean of squares` and `ĉ = mean of products / √(q̂_aa q̂_bb)`.
pub fn empirical_moments<T: Scalar>(fields_a: &[Array1<T>], fields_b: &[Array1<T>]) -> Result<Vec<LayerMoments<T>>> {
    if fields_a.len() != fields_b.len() {
        return Err(Error::Shape(format!("{} vs {} layers", fields_a.len(), fields_b.len())));
    }
    fields_a
        .iter()
        .zip(fields_b)
        .enumerate()
        .map(|(l, (a, b))| {
            if a.len() != b.len() || a.is_empty() {
                return Err(Error::Shape(format!("layer {l}: widths {} and {}", a.len(), b.len())));
            }
            let n = T::from_usize_lossy(a.len());
            let q_aa = a.dot(a) / n;
            let q_bb = b.dot(b) / n;
            let cross = a.dot(b) / n;
            let norm = (q_aa * q_bb).sqrt();
            let c_ab = if norm > T::zero() {
                cross / norm
            } else if q_aa == q_bb {
                T::one()
            } else {
                T::zero()
            };
            Ok(LayerMoments { q_aa, q_bb, c_ab })
        })
        .collect()
}

/// Ensemble means and sample standard deviations per layer, together with
/// the theory trace for the same network.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats<T> {
    pub q_aa_mean: Vec<T>,
    pub q_aa_std: Vec<T>,
    pub q_bb_mean: Vec<T>,
    pub q_bb_std: Vec<T>,
    pub c_ab_mean: Vec<T>,
    pub c_ab_std: Vec<T>,
    pub n_realizations: usize,
    pub theory: RecursionTrace<T>,
}

impl<T: Scalar> EnsembleStats<T> {
    pub fn depth(&self) -> usize {
        self.q_aa_mean.len().saturating_sub(1)
    }

    /// Standard error of the ensemble mean, `std / √n`.
    pub fn standard_error(&self, std: T) -> T {
        std / T::from_usize_lossy(self.n_realizations).sqrt()
    }
}

/// Moments of one realization; its network is generated layer by layer.
pub fn run_realization<T: Scalar>(config: &EnsembleConfig<T>, index: usize) -> Result<Vec<LayerMoments<T>>> {
    let (xa, xb) = input_pair_from(
        &mut stream(config.seed, index as u64, 0, StreamKind::Inputs),
        config.width,
        config.q0_aa,
        config.q0_bb,
        config.c0_ab,
    )?;
    let mut state = stack(Axis(0), &[xa.view(), xb.view()]).expect("equal lengths");
    let mut moments = Vec::with_capacity(config.depth + 1);
    let record = |m: &Array2<T>, out: &mut Vec<LayerMoments<T>>| -> Result<()> {
        let mut v = empirical_moments(&[m.row(0).to_owned()], &[m.row(1).to_owned()])?;
        out.push(v.pop().expect("one layer"));
        Ok(())
    };
    record(&state, &mut moments)?;
    for l in 0..config.depth {
        state = step(&sample_layer(config, index, l), l, &config.params, &state)?;
        record(&state, &mut moments)?;
    }
    Ok(moments)
}

/// Runs every realization (in parallel on the current rayon pool) and
/// reduces them in realization order.
pub fn run_ensemble<T: Scalar>(config: &EnsembleConfig<T>, rule: &QuadratureRule<T>) -> Result<EnsembleStats<T>> {
    config.validate()?;
    let per_realization: Vec<Vec<LayerMoments<T>>> = (0..config.n_realizations)
        .into_par_iter()
        .map(|r| {
            run_realization(config, r).map_err(|e| Error::Realization {
                index: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let layers = config.depth + 1;
    let column = |l: usize, pick: fn(&LayerMoments<T>) -> T| -> (T, T) {
        let xs: Vec<T> = per_realization.iter().map(|m| pick(&m[l])).collect();
        mean_std(&xs)
    };
    let mut stats = EnsembleStats {
        q_aa_mean: Vec::with_capacity(layers),
        q_aa_std: Vec::with_capacity(layers),
        q_bb_mean: Vec::with_capacity(layers),
        q_bb_std: Vec::with_capacity(layers),
        c_ab_mean: Vec::with_capacity(layers),
        c_ab_std: Vec::with_capacity(layers),
        n_realizations: config.n_realizations,
        theory: RecursionTrace::default(),
    };
    for l in 0..layers {
        let (m, s) = column(l, |x| x.q_aa);
        stats.q_aa_mean.push(m);
        stats.q_aa_std.push(s);
        let (m, s) = column(l, |x| x.q_bb);
        stats.q_bb_mean.push(m);
        stats.q_bb_std.push(s);
        let (m, s) = column(l, |x| x.c_ab);
        stats.c_ab_mean.push(m);
        stats.c_ab_std.push(s);
    }
    let mut theory_params = config.params;
    theory_params.sigma_m2 = T::lit(
        config
            .mean_init
            .effective_variance(config.params.sigma_m2.to_f64_lossy()),
    );
    stats.theory = iterate_theory_from_inputs(
        &theory_params,
        config.q0_aa,
        config.q0_bb,
        config.c0_ab,
        config.depth,
        rule,
    )?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(m: f64, c0: f64, n: usize) -> EnsembleConfig<f64> {
        EnsembleConfig {
            width: 200,
            depth: 6,
            n_realizations: n,
            params: MfParams::new(m, 0.001).unwrap(),
            mean_init: MeanInit::SymmetricBernoulli,
            q0_aa: 1.0,
            q0_bb: 1.0,
            c0_ab: c0,
            seed: 42,
        }
    }

    #[test]
    fn bernoulli_means_have_exact_magnitude() {
        let net = sample_network(&config(0.5, 0.3, 1), 3);
        let mean_sq = net.layers[0].means.iter().map(|v| v * v).sum::<f64>() / 40_000.0;
        assert!((mean_sq - 0.5).abs() < 1e-12);
        assert_eq!(net, sample_network(&config(0.5, 0.3, 1), 3));
        assert_ne!(net, sample_network(&config(0.5, 0.3, 1), 4));
    }

    #[test]
    fn input_pair_has_prescribed_moments() {
        let (a, b) = generate_input_pair(1000, 1.0f64, 2.5, 0.3, 8).unwrap();
        assert!((a.dot(&a) / 1000.0 - 1.0).abs() < 1e-12);
        assert!((b.dot(&b) / 1000.0 - 2.5).abs() < 1e-12);
        assert!((a.dot(&b) / 1000.0 - 0.3 * 2.5_f64.sqrt()).abs() < 1e-12);
        let (a, b) = generate_input_pair(50, 1.0f64, 1.0, 0.0, 1).unwrap();
        assert!((a.dot(&b) / 50.0).abs() < 1e-12);
        let (a, b) = generate_input_pair(50, 1.0f64, 4.0, 1.0, 1).unwrap();
        assert!((&b - &(&a * 2.0)).iter().all(|v| v.abs() < 1e-12));
        assert!(generate_input_pair::<f64>(1, 1.0, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn moments_guard_and_identities() {
        let a = vec![Array1::from(vec![1.0f64, -2.0, 0.5])];
        let m = empirical_moments(&a, &a).unwrap();
        assert!((m[0].c_ab - 1.0).abs() < 1e-15);
        let o = vec![Array1::from(vec![1.0, 0.0]), Array1::from(vec![0.0, 0.0])];
        let p = vec![Array1::from(vec![0.0, 1.0]), Array1::from(vec![0.0, 0.0])];
        let m = empirical_moments(&o, &p).unwrap();
        assert_eq!(m[0].c_ab, 0.0);
        assert_eq!(m[1].c_ab, 1.0);
        assert!(empirical_moments(&o, &p[..1]).is_err());
    }

    #[test]
    fn identical_inputs_stay_perfectly_correlated() {
        let s = run_ensemble(&config(0.5, 1.0, 4), &QuadratureRule::standard()).unwrap();
        for l in 0..=6 {
            assert!((s.c_ab_mean[l] - 1.0).abs() < 1e-12);
            assert!(s.c_ab_std[l] < 1e-12);
        }
    }

    #[test]
    fn single_realization_reports_zero_spread() {
        let s = run_ensemble(&config(0.2, 0.4, 1), &QuadratureRule::standard()).unwrap();
        assert!(s.q_aa_std.iter().chain(&s.c_ab_std).all(|&v| v == 0.0));
        assert_eq!(s.depth(), 6);
        assert_eq!(s.theory.depth(), 6);
    }

    #[test]
    fn ensemble_is_deterministic() {
        let rule = QuadratureRule::standard();
        let a = run_ensemble(&config(0.99, 0.2, 3), &rule).unwrap();
        let b = run_ensemble(&config(0.99, 0.2, 3), &rule).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_fields_matches_layerwise_run() {
        let cfg = config(0.5, 0.2, 1);
        let net = sample_network(&cfg, 0);
        let (xa, xb) = input_pair_from(
            &mut stream(cfg.seed, 0, 0, StreamKind::Inputs),
            cfg.width,
            1.0,
            1.0,
            0.2,
        )
        .unwrap();
        let fa = forward_fields(&net, xa.view()).unwrap();
        let fb = forward_fields(&net, xb.view()).unwrap();
        let m = empirical_moments(&fa, &fb).unwrap();
        let r = run_realization(&cfg, 0).unwrap();
        for (x, y) in m.iter().zip(&r) {
            assert!((x.q_aa - y.q_aa).abs() < 1e-12 && (x.c_ab - y.c_ab).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_first_layer_input_is_reported() {
        let net = sample_network(&config(0.5, 0.0, 1), 0);
        let x = Array1::zeros(200);
        assert!(matches!(
            forward_fields(&net, x.view()),
            Err(Error::DegenerateVariance { layer: 1, .. })
        ));
    }
}
