//! Mean-field theory of signal propagation through random Gaussian-binary
//! networks, plus the ordinary `tanh` baseline.

mod continuous;
mod maps;
mod params;
mod scales;

pub use continuous::{
    continuous_chi, continuous_correlation_map, continuous_fixed_point_q, continuous_variance_map, ContinuousParams,
};
pub use maps::{chi, chi1_variance_slope, correlation_map, e_phi2, variance_map};
pub use params::{Activation, MfParams, PROBIT_KAPPA};
pub use scales::{
    correlation_fixed_point, depth_scale, depth_scales, fixed_point_q, fixed_point_q_from, iterate_theory,
    iterate_theory_from_inputs, DepthScales, RecursionTrace, CRITICAL_MARGIN, DEFAULT_MAX_ITER, DEFAULT_TOL,
    FIXED_POINT_DAMPING,
};
