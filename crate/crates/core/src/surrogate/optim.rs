//! First-order optimizers acting on the weight means and biases.

use ndarray::{Array1, Array2, Zip};

use super::{project_means, Gradients, SurrogateNetwork, CLIP_EPS};
use crate::scalar::Scalar;

const MOMENTUM: f64 = 0.9;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    #[default]
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::Sgd),
            "momentum" => Ok(Self::Momentum),
            "adam" => Ok(Self::Adam),
            other => Err(format!("unknown optimizer '{other}'")),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Momentum => "momentum",
            Self::Adam => "adam",
        })
    }
}

/// How the means are kept inside `(−1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanConstraint {
    /// Plain update on `M`, then clamp.
    #[default]
    Projection,
    /// Update `θ = atanh(M)` and set `M = tanh(θ)`; the clamp only guards
    /// against rounding.
    Tanh,
}

impl std::str::FromStr for MeanConstraint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "projection" | "clip" => Ok(Self::Projection),
            "tanh" => Ok(Self::Tanh),
            other => Err(format!("unknown mean constraint '{other}'")),
        }
    }
}

impl std::fmt::Display for MeanConstraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Projection => "projection",
            Self::Tanh => "tanh",
        })
    }
}

/// Moment buffers; `first` holds momentum velocities or Adam first moments.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub kind: OptimizerKind,
    pub constraint: MeanConstraint,
    pub step: u64,
    first: Gradients<T>,
    second: Gradients<T>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, constraint: MeanConstraint, net: &SurrogateNetwork<T>) -> Self {
        Self {
            kind,
            constraint,
            step: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }
}

/// The per-coordinate update `Δ` (to be subtracted) for gradient `g`.
fn delta<T: Scalar>(kind: OptimizerKind, lr: T, g: T, m: &mut T, v: &mut T, bias1: T, bias2: T) -> T {
    match kind {
        OptimizerKind::Sgd => lr * g,
        OptimizerKind::Momentum => {
            *m = T::lit(MOMENTUM) * *m + g;
            lr * *m
        }
        OptimizerKind::Adam => {
            let (b1, b2) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2));
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            lr * (*m / bias1) / ((*v / bias2).sqrt() + T::lit(ADAM_EPS))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_matrix<T: Scalar>(
    state_kind: OptimizerKind,
    constraint: MeanConstraint,
    lr: T,
    (bias1, bias2): (T, T),
    means: &mut Array2<T>,
    grad: &Array2<T>,
    m: &mut Array2<T>,
    v: &mut Array2<T>,
) {
    let bound = T::one() - T::lit(CLIP_EPS);
    Zip::from(means)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|w, &g, m, v| match constraint {
            MeanConstraint::Projection => *w -= delta(state_kind, lr, g, m, v, bias1, bias2),
            MeanConstraint::Tanh => {
                let w0 = w.max(-bound).min(bound);
                // ∂L/∂θ = ∂L/∂M (1 − M²)
                let g_theta = g * (T::one() - w0 * w0);
                *w = (w0.atanh() - delta(state_kind, lr, g_theta, m, v, bias1, bias2)).tanh();
            }
        });
}

fn update_vector<T: Scalar>(
    kind: OptimizerKind,
    lr: T,
    (bias1, bias2): (T, T),
    bias: &mut Array1<T>,
    grad: &Array1<T>,
    m: &mut Array1<T>,
    v: &mut Array1<T>,
) {
    Zip::from(bias)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|w, &g, m, v| *w -= delta(kind, lr, g, m, v, bias1, bias2));
}

/// One update of every parameter followed by projection of the means.
pub fn optimizer_step<T: Scalar>(
    state: &mut OptimizerState<T>,
    net: &mut SurrogateNetwork<T>,
    grads: &Gradients<T>,
    lr: T,
) {
    state.step += 1;
    let t = state.step as i32;
    let corrections = (
        T::one() - T::lit(ADAM_BETA1).powi(t),
        T::one() - T::lit(ADAM_BETA2).powi(t),
    );
    for (l, layer) in net.layers.iter_mut().enumerate() {
        update_matrix(
            state.kind,
            state.constraint,
            lr,
            corrections,
            &mut layer.means,
            &grads.means[l],
            &mut state.first.means[l],
            &mut state.second.means[l],
        );
        update_vector(
            state.kind,
            lr,
            corrections,
            &mut layer.bias,
            &grads.bias[l],
            &mut state.first.bias[l],
            &mut state.second.bias[l],
        );
    }
    project_means(net);
}
