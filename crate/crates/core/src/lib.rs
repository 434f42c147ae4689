//! Signal propagation in Gaussian-binary surrogate networks.
//!
//! The crate has four parts:
//!
//! - [`theory`]: Gauss–Hermite quadrature driven variance and correlation
//!   maps, their fixed points, the correlation slope `χ`, and the depth
//!   scales `ξ_q`, `ξ_c`.
//! - [`ensemble`]: finite-width random networks that check the theory
//!   empirically, single-layer Jacobians and a sampler for the underlying
//!   stochastic binary fields.
//! - [`surrogate`]: the trainable network with exact backpropagation
//!   through the normalizing variances, optimizers and a training loop.
//! - [`data`]: IDX (MNIST) parsing, stratified subsampling and synthetic
//!   blobs.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common double precision instantiations.

// NaN-rejecting checks are written as `!(x <= bound)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod ensemble;
pub mod error;
pub mod init;
pub mod layer;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod surrogate;
pub mod theory;

pub use error::{Error, Result};
pub use quadrature::QuadratureRule;
pub use scalar::Scalar;
pub use theory::{DepthScales, MfParams, RecursionTrace};

pub type MfParams64 = theory::MfParams<f64>;
pub type QuadratureRule64 = quadrature::QuadratureRule<f64>;
pub type DepthScales64 = theory::DepthScales<f64>;
pub type RecursionTrace64 = theory::RecursionTrace<f64>;
pub type EnsembleConfig64 = ensemble::EnsembleConfig<f64>;
pub type EnsembleStats64 = ensemble::EnsembleStats<f64>;
pub type SurrogateNetwork32 = surrogate::SurrogateNetwork<f32>;
pub type SurrogateNetwork64 = surrogate::SurrogateNetwork<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
