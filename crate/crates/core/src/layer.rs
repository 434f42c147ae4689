//! One layer of normalized Gaussian-binary fields, shared by the random
//! network simulator and the trainable network.
//!
//! For inputs `a` (a batch of row vectors) the layer computes
//!
//! ```text
//! h̄_i = Σ_j M_ij a_j + b_i
//! Σ_i = Σ_j (1 - M_ij² a_j²)     hidden layer, a = ψ(h_prev)
//! Σ_i = Σ_j a_j² (1 - M_ij²)     first layer, deterministic inputs
//! h_i = h̄_i / √Σ_i
//! ```

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Whether a layer consumes raw inputs or activations of a previous layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerInput {
    Deterministic,
    Activations,
}

/// Weight means `M` (out × in) and biases `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanLayer<T> {
    pub means: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct LayerFields<T> {
    pub hbar: Array2<T>,
    pub sigma: Array2<T>,
    pub h: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub means: Array2<T>,
    pub bias: Array1<T>,
    /// Gradient with respect to the layer inputs; only for hidden layers.
    pub input: Option<Array2<T>>,
}

impl<T: Scalar> MeanLayer<T> {
    pub fn new(means: Array2<T>, bias: Array1<T>) -> Result<Self> {
        if means.nrows() != bias.len() {
            return Err(Error::Shape(format!(
                "{} rows of means but {} biases",
                means.nrows(),
                bias.len()
            )));
        }
        Ok(Self { means, bias })
    }

    pub fn fan_in(&self) -> usize {
        self.means.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.means.nrows()
    }

    fn squared_means(&self) -> Array2<T> {
        self.means.mapv(|m| m * m)
    }

    /// Forward pass for a batch. `layer` only labels errors.
    pub fn forward(&self, a: ArrayView2<T>, kind: LayerInput, layer: usize) -> Result<LayerFields<T>> {
        if a.ncols() != self.fan_in() {
            return Err(Error::Shape(format!(
                "layer {layer} expects {} inputs, got {}",
                self.fan_in(),
                a.ncols()
            )));
        }
        let mut hbar = a.dot(&self.means.t());
        hbar += &self.bias;
        let m2 = self.squared_means();
        let sigma = match kind {
            LayerInput::Deterministic => {
                let keep = m2.mapv(|v| T::one() - v);
                a.mapv(|v| v * v).dot(&keep.t())
            }
            LayerInput::Activations => {
                // Σ_j (1 - M²) + Σ_j M² (1 - a²): both sums are nonnegative,
                // which avoids cancellation when |M| and |a| approach 1.
                let base = m2.map_axis(Axis(1), |row| {
                    row.iter().fold(T::zero(), |acc, &v| acc + (T::one() - v))
                });
                let mut s = a.mapv(|v| (T::one() - v) * (T::one() + v)).dot(&m2.t());
                s += &base;
                s
            }
        };
        for ((_, unit), &s) in sigma.indexed_iter() {
            if !(s > T::zero()) {
                return Err(Error::DegenerateVariance {
                    layer,
                    unit,
                    variance: s.to_f64_lossy(),
                });
            }
        }
        let mut h = hbar.clone();
        h.zip_mut_with(&sigma, |v, &s| *v /= s.sqrt());
        Ok(LayerFields { hbar, sigma, h })
    }

    /// Backward pass given `∂L/∂h` for the batch.
    ///
    /// With `variance_path = false` the normalizers are treated as constants,
    /// which drops every `∂Σ` contribution.
    pub fn backward(
        &self,
        a: ArrayView2<T>,
        fields: &LayerFields<T>,
        grad_h: ArrayView2<T>,
        kind: LayerInput,
        variance_path: bool,
    ) -> LayerGrads<T> {
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        let mut grad_hbar = grad_h.to_owned();
        grad_hbar.zip_mut_with(&fields.sigma, |g, &s| *g /= s.sqrt());
        let bias = grad_hbar.sum_axis(Axis(0));
        let mut means = grad_hbar.t().dot(&a);

        let grad_sigma = variance_path.then(|| {
            // ∂h/∂Σ = -h̄ Σ^{-3/2} / 2 = -h / (2Σ)
            let mut gs = grad_h.to_owned();
            gs.zip_mut_with(&fields.h, |g, &h| *g = -half * *g * h);
            gs.zip_mut_with(&fields.sigma, |g, &s| *g /= s);
            gs
        });
        let a2 = grad_sigma.as_ref().map(|_| a.mapv(|v| v * v));
        if let (Some(gs), Some(a2)) = (&grad_sigma, &a2) {
            // ∂Σ_i/∂M_ij = -2 M_ij a_j² in both layer kinds
            let mut corr = gs.t().dot(a2);
            corr.zip_mut_with(&self.means, |c, &m| *c = two * m * *c);
            means -= &corr;
        }

        let input = match kind {
            LayerInput::Deterministic => None,
            LayerInput::Activations => {
                let mut ga = grad_hbar.dot(&self.means);
                if let Some(gs) = &grad_sigma {
                    // ∂Σ_i/∂a_j = -2 M_ij² a_j
                    let mut corr = gs.dot(&self.squared_means());
                    corr.zip_mut_with(&a, |c, &v| *c = two * v * *c);
                    ga -= &corr;
                }
                Some(ga)
            }
        };
        LayerGrads { means, bias, input }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_means_give_bias_over_root_width() {
        let layer = MeanLayer::new(Array2::<f64>::zeros((3, 4)), array![1.0, -2.0, 0.5]).unwrap();
        let a = array![[0.3, -0.2, 0.9, 0.1]];
        let out = layer.forward(a.view(), LayerInput::Activations, 1).unwrap();
        for (h, b) in out.h.iter().zip([1.0, -2.0, 0.5]) {
            assert!((h - b / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_is_degenerate_for_first_layer() {
        let layer = MeanLayer::new(Array2::<f64>::from_elem((2, 3), 0.5), Array1::zeros(2)).unwrap();
        let a = Array2::<f64>::zeros((1, 3));
        match layer.forward(a.view(), LayerInput::Deterministic, 1) {
            Err(Error::DegenerateVariance { layer: 1, .. }) => {}
            other => panic!("expected degenerate variance, got {other:?}"),
        }
    }

    #[test]
    fn hidden_normalizer_formula() {
        let m = array![[0.5f64, -0.25], [0.9, 0.1]];
        let layer = MeanLayer::new(m.clone(), array![0.0, 0.0]).unwrap();
        let a = array![[0.4, -0.7]];
        let out = layer.forward(a.view(), LayerInput::Activations, 2).unwrap();
        for i in 0..2 {
            let expected: f64 = (0..2).map(|j| 1.0 - (m[[i, j]] * a[[0, j]]).powi(2)).sum();
            assert!((out.sigma[[0, i]] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let layer = MeanLayer::new(Array2::<f64>::zeros((2, 3)), Array1::zeros(2)).unwrap();
        assert!(layer
            .forward(Array2::zeros((1, 4)).view(), LayerInput::Activations, 1)
            .is_err());
        assert!(MeanLayer::new(Array2::<f64>::zeros((2, 3)), Array1::zeros(3)).is_err());
    }
}
