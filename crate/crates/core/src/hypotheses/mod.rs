//! Parametric reconstruction families `R_theta` and their stability checks.
//!
//! Parameters are flat vectors; each family knows how to unpack them, which
//! metric `d(theta, theta')` it uses, and (optionally) the analytic gradient of
//! the quadratic loss.

mod certify;
mod class;
mod elastic_net;
mod fixed_point;
mod penalty;
mod tikhonov;

pub use certify::{
    certify_stability, check_g_hypotheses, sample_probe_pairs, Certificate, GHypothesesReport,
    NormBoundCheck,
};
pub use class::ParamClass;
pub use elastic_net::{reconstruct_elastic_net, ElasticNetFamily, ElasticNetParams, ElasticNetSolution};
pub use fixed_point::{
    reconstruct_fixed_point, solve_fixed_point, FixedPointArch, FixedPointFamily, FixedPointParams,
    FixedPointSolution, Mixer, mixer_matrix,
};
pub use penalty::{BMode, HMode, Penalty, PenaltyLayout, PenaltyShape};
pub use tikhonov::{reconstruct_tikhonov, TikhonovFamily, TikhonovParams};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;

/// A reconstruction map with its parameter already fixed.
pub trait Reconstructor<T>: Send + Sync {
    fn reconstruct(&self, y: &[T]) -> Result<Vec<T>>;
}

pub trait Family<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Length of the flat parameter vector.
    fn param_dim(&self) -> usize;

    fn bind<'a>(&'a self, theta: &[T]) -> Result<Box<dyn Reconstructor<T> + 'a>>;

    fn reconstruct(&self, theta: &[T], y: &[T]) -> Result<Vec<T>> {
        self.bind(theta)?.reconstruct(y)
    }

    /// The metric `d` on parameters used by stability certificates.
    fn param_distance(&self, a: &[T], b: &[T]) -> T {
        crate::linalg::dist(a, b)
    }

    /// Exponent `alpha` in `||R_theta(y) - R_theta'(y)|| <= (L||y|| + L') d^alpha`.
    fn holder_exponent(&self) -> T {
        T::one()
    }

    /// Sums of `0.5 ||R_theta(y_j) - x_j||^2` and of its gradient in `theta`
    /// over `pairs`, when the family provides the gradient in closed form.
    fn loss_gradient(&self, _theta: &[T], _pairs: &[(Vec<T>, Vec<T>)]) -> Option<Result<(T, Vec<T>)>> {
        None
    }

    /// Analytic `(L, L')` valid for every parameter pair in the family.
    fn stability_bound(&self) -> Option<(T, T)> {
        None
    }

    /// Upper bound on `||R_theta(y)||^2` given `||y||` and the parameter.
    fn norm_bound(&self, _theta: &[T], _y_norm: T) -> Option<NormBoundCheck> {
        None
    }
}

/// Parameter vector tagged with the family it belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaggedParams {
    pub family: String,
    pub theta: Vec<f64>,
}

impl TaggedParams {
    pub fn new<T: Scalar>(family: &dyn Family<T>, theta: &[T]) -> Self {
        Self { family: family.name().to_string(), theta: theta.iter().map(|v| v.as_f64()).collect() }
    }
}

/// The zero map, `R_theta = 0` for every `theta`.
#[derive(Clone, Debug)]
pub struct ZeroFamily {
    pub param_dim: usize,
    pub output_dim: usize,
}

struct ZeroMap(usize);

impl<T: Scalar> Reconstructor<T> for ZeroMap {
    fn reconstruct(&self, _y: &[T]) -> Result<Vec<T>> {
        Ok(vec![T::zero(); self.0])
    }
}

impl<T: Scalar> Family<T> for ZeroFamily {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn bind<'a>(&'a self, theta: &[T]) -> Result<Box<dyn Reconstructor<T> + 'a>> {
        crate::error::check_len(self.param_dim, theta.len())?;
        Ok(Box::new(ZeroMap(self.output_dim)))
    }
}

impl<T: Scalar> Reconstructor<T> for crate::operators::AffineMap<T> {
    fn reconstruct(&self, y: &[T]) -> Result<Vec<T>> {
        self.apply(y)
    }
}
