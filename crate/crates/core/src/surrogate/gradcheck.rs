//! Central-difference check of the analytic gradients.

use ndarray::ArrayView2;

use super::SurrogateNetwork;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Relative errors use `max(|analytic|, |numeric|, ABS_FLOOR)` as denominator.
const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Means,
    Bias,
}

/// A single parameter: `means[layer][row, col]` or `bias[layer][row]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coordinate {
    pub layer: usize,
    pub kind: ParamKind,
    pub row: usize,
    pub col: usize,
}

impl std::fmt::Display for Coordinate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            ParamKind::Means => write!(f, "M[{}][{}, {}]", self.layer, self.row, self.col),
            ParamKind::Bias => write!(f, "b[{}][{}]", self.layer, self.row),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub worst: Coordinate,
    pub analytic: f64,
    pub numeric: f64,
    pub n_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} over {} parameters: max relative error {:.3e} at {} (analytic {:.6e}, numeric {:.6e}), tolerance {:.1e}",
            if self.passed { "pass" } else { "FAIL" },
            self.n_checked,
            self.max_rel_error,
            self.worst,
            self.analytic,
            self.numeric,
            self.tolerance
        )
    }
}

/// Compares every analytic gradient coordinate with a central difference.
pub fn gradcheck<T: Scalar>(
    net: &SurrogateNetwork<T>,
    x: ArrayView2<T>,
    labels: &[usize],
    epsilon: T,
    tolerance: f64,
) -> Result<GradcheckReport> {
    gradcheck_with(net, x, labels, epsilon, tolerance, true)
}

/// As [`gradcheck`], with the analytic side computed with or without the
/// variance path.
pub fn gradcheck_with<T: Scalar>(
    net: &SurrogateNetwork<T>,
    x: ArrayView2<T>,
    labels: &[usize],
    epsilon: T,
    tolerance: f64,
    variance_path: bool,
) -> Result<GradcheckReport> {
    if !(epsilon > T::zero()) {
        return Err(invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    let (_, grads) = net.loss_and_grad_with(x, labels, variance_path)?;
    let mut probe = net.clone();
    let two_eps = (epsilon + epsilon).to_f64_lossy();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst: Coordinate {
            layer: 0,
            kind: ParamKind::Bias,
            row: 0,
            col: 0,
        },
        analytic: 0.0,
        numeric: 0.0,
        n_checked: 0,
        tolerance,
        passed: true,
    };
    let mut consider = |coord: Coordinate, analytic: f64, numeric: f64| {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR);
        report.n_checked += 1;
        if rel > report.max_rel_error || rel.is_nan() {
            report.max_rel_error = rel;
            report.worst = coord;
            report.analytic = analytic;
            report.numeric = numeric;
        }
    };
    for l in 0..net.layers.len() {
        let (rows, cols) = net.layers[l].means.dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = probe.layers[l].means[[r, c]];
                probe.layers[l].means[[r, c]] = orig + epsilon;
                let up = probe.loss(x, labels)?.to_f64_lossy();
                probe.layers[l].means[[r, c]] = orig - epsilon;
                let down = probe.loss(x, labels)?.to_f64_lossy();
                probe.layers[l].means[[r, c]] = orig;
                let coord = Coordinate {
                    layer: l,
                    kind: ParamKind::Means,
                    row: r,
                    col: c,
                };
                consider(coord, grads.means[l][[r, c]].to_f64_lossy(), (up - down) / two_eps);
            }
            let orig = probe.layers[l].bias[r];
            probe.layers[l].bias[r] = orig + epsilon;
            let up = probe.loss(x, labels)?.to_f64_lossy();
            probe.layers[l].bias[r] = orig - epsilon;
            let down = probe.loss(x, labels)?.to_f64_lossy();
            probe.layers[l].bias[r] = orig;
            let coord = Coordinate {
                layer: l,
                kind: ParamKind::Bias,
                row: r,
                col: 0,
            };
            consider(coord, grads.bias[l][r].to_f64_lossy(), (up - down) / two_eps);
        }
    }
    report.passed = report.max_rel_error < tolerance;
    Ok(report)
}
