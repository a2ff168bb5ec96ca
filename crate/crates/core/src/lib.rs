//! Learned reconstruction for linear inverse problems.
//!
//! The crate implements three parametric reconstruction families (learned
//! generalized Tikhonov, Elastic-Net with a learned penalty, contractive
//! fixed-point maps), trains them by empirical risk minimization, and provides
//! the tools to check sample-error theory empirically: Orlicz-norm estimation,
//! covering numbers, covering and chaining bounds, and predicted rate
//! exponents.
//!
//! Algebraic code is generic over [`Scalar`] (`f32` or `f64`); the Monte Carlo
//! drivers in [`risk`] run in `f64`. The aliases at the crate root name the
//! double-precision instantiations used by the experiment harness.

// `!(x > 0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod fit;
pub mod hypotheses;
pub mod linalg;
pub mod operators;
pub mod quad;
pub mod risk;
pub mod scalar;
pub mod seed;
pub mod stochastics;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type ForwardOperator = operators::ForwardOperator<f64>;
pub type GaussianSpec = operators::GaussianSpec<f64>;
pub type ProblemDistribution = stochastics::ProblemDistribution<f64>;
pub type TrainingSet = stochastics::TrainingSet<f64>;
pub type ParamClass = hypotheses::ParamClass<f64>;
pub type CoveringModel = bounds::CoveringModel<f64>;
pub type BoundInputs = bounds::BoundInputs<f64>;

pub type ForwardOperator32 = operators::ForwardOperator<f32>;
pub type GaussianSpec32 = operators::GaussianSpec<f32>;
pub type ParamClass32 = hypotheses::ParamClass<f32>;

