//! The trainable Gaussian-binary surrogate network.
//!
//! Hidden layers compute `a^ℓ = tanh(κ h^ℓ)` from normalized fields
//! `h^ℓ = h̄^ℓ / √Σ^ℓ`; the output layer returns `κ h^L` as logits. The
//! first layer reads deterministic inputs and uses `Σ_j x_j² (1 − M_ij²)`.

mod checkpoint;
mod gradcheck;
mod optim;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{gradcheck, gradcheck_with, Coordinate, GradcheckReport, ParamKind};
pub use optim::{optimizer_step, MeanConstraint, OptimizerKind, OptimizerState};
pub use train::{binarize_and_eval, evaluate, train, train_with, EpochMetrics, Evaluation, TrainConfig, TrainOutcome};

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, Error, Result};
use crate::init::{sample_biases, sample_means, MeanInit};
use crate::layer::{LayerFields, LayerInput, MeanLayer};
use crate::rng::{stream, StreamKind};
use crate::scalar::Scalar;

/// Means are kept in `[−(1 − CLIP_EPS), 1 − CLIP_EPS]`.
pub const CLIP_EPS: f64 = 1e-6;

/// How output fields become a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Head {
    /// One output per class, softmax cross-entropy on `κ h^L`.
    #[default]
    Softmax,
    /// Two classes with a single output unit and logistic loss.
    BinarySigmoid,
}

impl Head {
    pub fn outputs(self, n_classes: usize) -> usize {
        match self {
            Head::Softmax => n_classes,
            Head::BinarySigmoid => 1,
        }
    }
}

impl std::str::FromStr for Head {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "softmax" => Ok(Head::Softmax),
            "binarysigmoid" | "sigmoid" => Ok(Head::BinarySigmoid),
            other => Err(format!("unknown head '{other}'")),
        }
    }
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Head::Softmax => "softmax",
            Head::BinarySigmoid => "binary-sigmoid",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateNetwork<T> {
    /// Hidden layers followed by the output layer.
    pub layers: Vec<MeanLayer<T>>,
    pub kappa: T,
    pub head: Head,
}

/// Per-layer inputs (`x` for the first layer, `tanh(κ h)` afterwards) and
/// fields of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub inputs: Vec<Array2<T>>,
    pub fields: Vec<LayerFields<T>>,
}

/// `∂L/∂M` and `∂L/∂b` for every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub means: Vec<Array2<T>>,
    pub bias: Vec<Array1<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &SurrogateNetwork<T>) -> Self {
        Self {
            means: net.layers.iter().map(|l| Array2::zeros(l.means.raw_dim())).collect(),
            bias: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }
}

fn layer_kind(index: usize) -> LayerInput {
    if index == 0 {
        LayerInput::Deterministic
    } else {
        LayerInput::Activations
    }
}

/// Clamps every mean into `[−(1 − CLIP_EPS), 1 − CLIP_EPS]`.
pub fn project_means<T: Scalar>(net: &mut SurrogateNetwork<T>) {
    let bound = T::one() - T::lit(CLIP_EPS);
    for layer in &mut net.layers {
        layer.means.mapv_inplace(|m| m.max(-bound).min(bound));
    }
}

/// Random network with layer sizes `dims = [input, hidden…, output]`.
#[allow(clippy::too_many_arguments)]
pub fn init_network<T: Scalar>(
    dims: &[usize],
    sigma_m2: T,
    sigma_b2: T,
    mean_init: MeanInit,
    kappa: T,
    head: Head,
    seed: u64,
) -> Result<SurrogateNetwork<T>> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(invalid(format!(
            "need at least input and output sizes, all >= 1, got {dims:?}"
        )));
    }
    if !(sigma_m2 >= T::zero() && sigma_m2 < T::one()) {
        return Err(invalid(format!("sigma_m2 must lie in [0, 1), got {sigma_m2}")));
    }
    if !(sigma_b2 >= T::zero()) || !(kappa > T::zero()) {
        return Err(invalid("sigma_b2 must be >= 0 and kappa > 0"));
    }
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let means = sample_means(
                fan_out,
                fan_in,
                sigma_m2,
                mean_init,
                &mut stream(seed, 0, l as u64, StreamKind::Means),
            );
            let bias = sample_biases(
                fan_out,
                fan_in,
                sigma_b2,
                &mut stream(seed, 0, l as u64, StreamKind::Biases),
            );
            MeanLayer { means, bias }
        })
        .collect();
    let mut net = SurrogateNetwork { layers, kappa, head };
    project_means(&mut net);
    Ok(net)
}

impl<T: Scalar> SurrogateNetwork<T> {
    /// Number of hidden layers.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    /// `[input, hidden…, output]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].fan_in()];
        d.extend(self.layers.iter().map(|l| l.fan_out()));
        d
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.means.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut fields = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let f = layer.forward(a.view(), layer_kind(l), l + 1)?;
            let next = if l + 1 < self.layers.len() {
                f.h.mapv(|h| (self.kappa * h).tanh())
            } else {
                f.h.mapv(|h| self.kappa * h)
            };
            inputs.push(std::mem::replace(&mut a, next));
            fields.push(f);
        }
        Ok((a, ForwardCache { inputs, fields }))
    }

    /// Logits only.
    pub fn logits(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let h = layer.forward(a.view(), layer_kind(l), l + 1)?.h;
            a = if l + 1 < self.layers.len() {
                h.mapv(|h| (self.kappa * h).tanh())
            } else {
                h.mapv(|h| self.kappa * h)
            };
        }
        Ok(a)
    }

    /// Predicted classes of a batch.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Vec<usize>> {
        Ok(predictions(self.head, &self.logits(x)?))
    }

    fn check_labels(&self, z: &Array2<T>, labels: &[usize]) -> Result<()> {
        if labels.len() != z.nrows() {
            return Err(Error::CountMismatch {
                images: z.nrows(),
                labels: labels.len(),
            });
        }
        let classes = match self.head {
            Head::Softmax => z.ncols(),
            Head::BinarySigmoid => 2,
        };
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(invalid(format!("label {l} out of range for {classes} classes")));
        }
        Ok(())
    }

    /// Mean loss over the batch.
    pub fn loss(&self, x: ArrayView2<T>, labels: &[usize]) -> Result<T> {
        self.loss_from_logits(&self.logits(x)?, labels)
    }

    pub fn loss_from_logits(&self, z: &Array2<T>, labels: &[usize]) -> Result<T> {
        self.check_labels(z, labels)?;
        Ok(loss_and_dlogits(self.head, z, labels, false).0)
    }

    /// Mean loss and its exact gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<T>, labels: &[usize]) -> Result<(T, Gradients<T>)> {
        self.loss_and_grad_with(x, labels, true)
    }

    /// As [`Self::loss_and_grad`]; `variance_path = false` drops every
    /// contribution flowing through the normalizers `Σ`.
    pub fn loss_and_grad_with(
        &self,
        x: ArrayView2<T>,
        labels: &[usize],
        variance_path: bool,
    ) -> Result<(T, Gradients<T>)> {
        let (z, cache) = self.forward(x)?;
        self.check_labels(&z, labels)?;
        let (loss, dz) = loss_and_dlogits(self.head, &z, labels, true);
        let mut grad_h = dz.expect("requested") * self.kappa;
        let n = self.layers.len();
        let mut means = Vec::with_capacity(n);
        let mut bias = Vec::with_capacity(n);
        for l in (0..n).rev() {
            let a = &cache.inputs[l];
            let g = self.layers[l].backward(a.view(), &cache.fields[l], grad_h.view(), layer_kind(l), variance_path);
            means.push(g.means);
            bias.push(g.bias);
            if let Some(mut ga) = g.input {
                // a = tanh(κ h) ⇒ da/dh = κ (1 − a²)
                ga.zip_mut_with(a, |g, &a| *g = *g * self.kappa * (T::one() - a * a));
                grad_h = ga;
            }
        }
        means.reverse();
        bias.reverse();
        Ok((loss, Gradients { means, bias }))
    }

    /// Predictions of the deterministic ±1 network: `sign(M)` weights, sign
    /// activations and no normalization.
    pub fn binarized_predict(&self, x: ArrayView2<T>) -> Result<Vec<usize>> {
        if x.ncols() != self.layers[0].fan_in() {
            return Err(Error::Shape(format!(
                "expected {} inputs, got {}",
                self.layers[0].fan_in(),
                x.ncols()
            )));
        }
        let sign = |v: T| if v >= T::zero() { T::one() } else { -T::one() };
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut h = a.dot(&layer.means.mapv(sign).t());
            h += &layer.bias;
            a = if l + 1 < self.layers.len() { h.mapv(sign) } else { h };
        }
        Ok(predictions(self.head, &a))
    }
}

pub fn predictions<T: Scalar>(head: Head, z: &Array2<T>) -> Vec<usize> {
    match head {
        Head::Softmax => z
            .axis_iter(Axis(0))
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold(
                        (0, T::neg_infinity()),
                        |best, (k, &v)| if v > best.1 { (k, v) } else { best },
                    )
                    .0
            })
            .collect(),
        Head::BinarySigmoid => z.column(0).iter().map(|&v| usize::from(v > T::zero())).collect(),
    }
}

/// Mean loss and, if asked, `∂L/∂z` for logits `z`.
fn loss_and_dlogits<T: Scalar>(head: Head, z: &Array2<T>, labels: &[usize], grad: bool) -> (T, Option<Array2<T>>) {
    let n = T::from_usize_lossy(labels.len());
    let mut total = T::zero();
    let mut dz = grad.then(|| Array2::zeros(z.raw_dim()));
    match head {
        Head::Softmax => {
            for (i, row) in z.axis_iter(Axis(0)).enumerate() {
                let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
                let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
                let log_norm = max + sum.ln();
                total += log_norm - row[labels[i]];
                if let Some(d) = dz.as_mut() {
                    for (k, &v) in row.iter().enumerate() {
                        let p = (v - log_norm).exp();
                        let y = if k == labels[i] { T::one() } else { T::zero() };
                        d[[i, k]] = (p - y) / n;
                    }
                }
            }
        }
        Head::BinarySigmoid => {
            for (i, &v) in z.column(0).iter().enumerate() {
                let y = if labels[i] == 1 { T::one() } else { -T::one() };
                let m = -y * v;
                // softplus(m) = log(1 + e^m), computed without overflow
                total += m.max(T::zero()) + (-m.abs()).exp().ln_1p();
                if let Some(d) = dz.as_mut() {
                    let s = T::one() / (T::one() + (-m).exp());
                    d[[i, 0]] = -y * s / n;
                }
            }
        }
    }
    (total / n, dz)
}
