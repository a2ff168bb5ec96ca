//! Elastic-Net reconstruction with a learned penalty:
//! `R_theta(y) = argmin_x 0.5 ||Ax - y||^2 + ||Bx - h||^(2 alpha) + eta ||x||^2`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{dist, dot, norm, sub, Matrix};
use crate::operators::ForwardOperator;
use crate::scalar::Scalar;

use super::certify::NormBoundCheck;
use super::penalty::{Penalty, PenaltyLayout};
use super::{Family, Reconstructor};

/// Smoothing radius for `alpha < 1`: the penalty becomes
/// `(||Bx - h||^2 + mu^2)^alpha - mu^(2 alpha)`.
pub const SMOOTHING_MU: f64 = 1e-8;

const MAX_ITERATIONS: usize = 200_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetParams<T: Scalar> {
    pub h: Vec<T>,
    #[serde(rename = "B")]
    pub b: Penalty<T>,
    pub alpha: T,
    pub eta: T,
}

impl<T: Scalar> ElasticNetParams<T> {
    fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero()) {
            return invalid("eta must be positive");
        }
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return invalid("alpha must lie in (0, 1]");
        }
        self.b.check_dim(self.h.len())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetSolution<T: Scalar> {
    pub x: Vec<T>,
    /// Norm of the gradient of the (smoothed) objective at `x`.
    pub residual: T,
    pub iterations: usize,
    /// `1 / (2 eta)`: `||x - x*|| <= residual * kappa` by strong convexity.
    pub kappa: T,
    /// `mu^(2 alpha)` when the penalty was smoothed, else zero.
    pub smoothing_error: T,
}

struct Problem<'a, T: Scalar> {
    a: &'a Matrix<T>,
    y: &'a [T],
    h: &'a [T],
    b: &'a Penalty<T>,
    alpha: T,
    eta: T,
    mu2: T,
}

impl<T: Scalar> Problem<'_, T> {
    fn penalty_residual(&self, x: &[T]) -> Vec<T> {
        sub(&self.b.apply(x), self.h)
    }

    fn g(&self, r2: T) -> T {
        if self.alpha == T::one() {
            r2
        } else {
            (r2 + self.mu2).powf(self.alpha) - self.mu2.powf(self.alpha)
        }
    }

    fn objective(&self, x: &[T]) -> T {
        let ax = self.a.matvec(x).expect("dimension checked");
        let d = sub(&ax, self.y);
        let r = self.penalty_residual(x);
        T::lit(0.5) * dot(&d, &d) + self.g(dot(&r, &r)) + self.eta * dot(x, x)
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let ax = self.a.matvec(x).expect("dimension checked");
        let mut grad = self.a.tr_matvec(&sub(&ax, self.y)).expect("dimension checked");
        let r = self.penalty_residual(x);
        let coef = if self.alpha == T::one() {
            T::lit(2.0)
        } else {
            T::lit(2.0) * self.alpha * (dot(&r, &r) + self.mu2).powf(self.alpha - T::one())
        };
        let btr = self.b.apply_transpose(&r);
        for ((g, &bt), &xi) in grad.iter_mut().zip(&btr).zip(x) {
            *g += coef * bt + T::lit(2.0) * self.eta * xi;
        }
        grad
    }

    /// Accelerated gradient descent; the step `1/L` is found by backtracking
    /// on `||grad(x+) - grad(z)|| <= L ||x+ - z||`. Momentum is reset when
    /// the objective increases or the step points uphill.
    fn solve(&self, tol: T) -> Result<ElasticNetSolution<T>> {
        let n = self.a.cols();
        let mut x = vec![T::zero(); n];
        let mut fx = self.objective(&x);
        let mut gx = self.gradient(&x);
        let mut z = x.clone();
        let mut gz = gx.clone();
        let mut t = T::one();
        let mut lip = T::lit(2.0) * self.eta;
        let kappa = T::one() / (T::lit(2.0) * self.eta);
        let smoothing_error = if self.alpha == T::one() { T::zero() } else { self.mu2.powf(self.alpha) };
        let mut residual = norm(&gx);
        for it in 0..MAX_ITERATIONS {
            if residual <= tol {
                return Ok(ElasticNetSolution { x, residual, iterations: it, kappa, smoothing_error });
            }
            let (xn, gn) = loop {
                let xn: Vec<T> = z.iter().zip(&gz).map(|(&zi, &gi)| zi - gi / lip).collect();
                let gn = self.gradient(&xn);
                let step = dist(&xn, &z);
                if dist(&gn, &gz) <= lip * step * (T::one() + T::lit(1e-12)) || step == T::zero() {
                    break (xn, gn);
                }
                lip *= T::lit(2.0);
                if !lip.is_finite() {
                    return Err(Error::NotConverged { iterations: it, residual: residual.as_f64() });
                }
            };
            let fn_ = self.objective(&xn);
            let slack = T::lit(1e-13) * (T::one() + fx.abs());
            if fn_ > fx + slack && t > T::one() {
                // momentum overshot: retry from x with a plain gradient step
                t = T::one();
                z = x.clone();
                gz = gx.clone();
                continue;
            }
            let mut tn = T::lit(0.5) * (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt());
            let moved: Vec<T> = sub(&xn, &x);
            if dot(&gz, &moved) > T::zero() {
                tn = T::one();
                t = T::one();
            }
            let beta = (t - T::one()) / tn;
            z = xn.iter().zip(&moved).map(|(&a, &d)| a + beta * d).collect();
            gz = if beta == T::zero() { gn.clone() } else { self.gradient(&z) };
            x = xn;
            gx = gn;
            fx = fn_;
            t = tn;
            residual = norm(&gx);
            lip = (lip * T::lit(0.9)).max(T::lit(2.0) * self.eta);
        }
        Err(Error::NotConverged { iterations: MAX_ITERATIONS, residual: residual.as_f64() })
    }
}

fn solve_with<T: Scalar>(
    a: &Matrix<T>,
    h: &[T],
    b: &Penalty<T>,
    alpha: T,
    eta: T,
    y: &[T],
    tol: T,
) -> Result<ElasticNetSolution<T>> {
    check_len(a.rows(), y.len())?;
    check_len(a.cols(), h.len())?;
    if !(tol > T::zero()) {
        return invalid("tolerance must be positive");
    }
    let mu = T::lit(SMOOTHING_MU);
    Problem { a, y, h, b, alpha, eta, mu2: mu * mu }.solve(tol)
}

/// Minimizes the Elastic-Net functional until the gradient norm of the
/// (smoothed, when `alpha < 1`) objective is at most `tol`.
pub fn reconstruct_elastic_net<T: Scalar>(
    params: &ElasticNetParams<T>,
    a: &ForwardOperator<T>,
    y: &[T],
    tol: T,
) -> Result<ElasticNetSolution<T>> {
    params.validate()?;
    check_len(a.n_x(), params.h.len())?;
    solve_with(&a.to_dense(), &params.h, &params.b, params.alpha, params.eta, y, tol)
}

#[derive(Clone, Debug)]
pub struct ElasticNetFamily<T: Scalar> {
    layout: PenaltyLayout<T>,
    a: Matrix<T>,
    alpha: T,
    eta: T,
    tol: T,
}

impl<T: Scalar> ElasticNetFamily<T> {
    pub fn new(a: &ForwardOperator<T>, layout: PenaltyLayout<T>, alpha: T, eta: T, tol: T) -> Result<Self> {
        check_len(a.n_x(), layout.n)?;
        if !(eta > T::zero()) {
            return invalid("eta must be positive");
        }
        if !(alpha > T::zero() && alpha <= T::one()) {
            return invalid("alpha must lie in (0, 1]");
        }
        if !(tol > T::zero()) {
            return invalid("tolerance must be positive");
        }
        Ok(Self { layout, a: a.to_dense(), alpha, eta, tol })
    }

    pub fn layout(&self) -> &PenaltyLayout<T> {
        &self.layout
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn params(&self, theta: &[T]) -> Result<ElasticNetParams<T>> {
        let (h, b) = self.layout.unpack(theta)?;
        Ok(ElasticNetParams { h, b, alpha: self.alpha, eta: self.eta })
    }
}

struct BoundMap<'a, T: Scalar> {
    fam: &'a ElasticNetFamily<T>,
    h: Vec<T>,
    b: Penalty<T>,
}

impl<T: Scalar> Reconstructor<T> for BoundMap<'_, T> {
    fn reconstruct(&self, y: &[T]) -> Result<Vec<T>> {
        let f = self.fam;
        Ok(solve_with(&f.a, &self.h, &self.b, f.alpha, f.eta, y, f.tol)?.x)
    }
}

impl<T: Scalar> Family<T> for ElasticNetFamily<T> {
    fn name(&self) -> &'static str {
        "elastic_net"
    }

    fn param_dim(&self) -> usize {
        self.layout.param_dim()
    }

    fn bind<'a>(&'a self, theta: &[T]) -> Result<Box<dyn Reconstructor<T> + 'a>> {
        let (h, b) = self.layout.unpack(theta)?;
        Ok(Box::new(BoundMap { fam: self, h, b }))
    }

    fn param_distance(&self, a: &[T], b: &[T]) -> T {
        self.layout.distance(a, b)
    }

    fn holder_exponent(&self) -> T {
        self.alpha
    }

    /// Comparing the objective at `p_theta` and at `0` gives
    /// `||p||^2 <= (||y||^2 / 2 + g_theta(0)) / eta`.
    fn norm_bound(&self, theta: &[T], y_norm: T) -> Option<NormBoundCheck> {
        let (h, _) = self.layout.unpack(theta).ok()?;
        let g0 = norm(&h).powf(T::lit(2.0) * self.alpha).as_f64();
        let y2 = (y_norm * y_norm).as_f64();
        let eta = self.eta.as_f64();
        Some(NormBoundCheck { derived: (0.5 * y2 + g0) / eta, printed: y2 / (2.0 * eta) + g0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::substream;
    use rand::Rng;

    fn params(b: f64, alpha: f64, eta: f64, n: usize) -> ElasticNetParams<f64> {
        ElasticNetParams { h: vec![0.0; n], b: Penalty::Scalar(b), alpha, eta }
    }

    #[test]
    fn no_penalty_halves_the_data() {
        let a = ForwardOperator::identity(2);
        let s = reconstruct_elastic_net(&params(0.0, 0.7, 0.5, 2), &a, &[1.0, -3.0], 1e-12).unwrap();
        assert!(dist(&s.x, &[0.5, -1.5]) < 1e-11);
    }

    #[test]
    fn quadratic_instance_matches_closed_form() {
        let a = ForwardOperator::identity(3);
        let tol = 1e-10;
        let y = [2.0, -1.0, 0.25];
        let s = reconstruct_elastic_net(&params(1.0, 1.0, 0.5, 3), &a, &y, tol).unwrap();
        let exact: Vec<f64> = y.iter().map(|v| v / 4.0).collect();
        assert!(s.residual <= tol);
        assert!(dist(&s.x, &exact) <= tol * s.kappa);
    }

    #[test]
    fn sub_quadratic_penalty_converges() {
        let a = ForwardOperator::power_decay(4, 1.0).unwrap();
        let p = ElasticNetParams { h: vec![0.2, 0.0, -0.1, 0.0], b: Penalty::Diagonal(vec![1.0, 0.5, 2.0, 1.0]), alpha: 0.75, eta: 0.1 };
        let s = reconstruct_elastic_net(&p, &a, &[1.0, 0.3, -0.2, 0.05], 1e-8).unwrap();
        assert!(s.residual <= 1e-8);
        assert!(s.smoothing_error > 0.0);
    }

    #[test]
    fn minimality_probe() {
        let a = ForwardOperator::power_decay(3, 0.5).unwrap();
        let p = ElasticNetParams { h: vec![0.3, -0.2, 0.1], b: Penalty::Scalar(0.8), alpha: 1.0, eta: 0.2 };
        let y = [0.4, 1.0, -0.7];
        let s = reconstruct_elastic_net(&p, &a, &y, 1e-10).unwrap();
        let dense = a.to_dense();
        let prob = Problem { a: &dense, y: &y, h: &p.h, b: &p.b, alpha: 1.0, eta: 0.2, mu2: 0.0 };
        let f0 = prob.objective(&s.x);
        let mut rng = substream(5, 0);
        for _ in 0..100 {
            let x: Vec<f64> = s.x.iter().map(|v| v + 1e-3 * (rng.random::<f64>() - 0.5)).collect();
            assert!(prob.objective(&x) >= f0);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let a = ForwardOperator::identity(1);
        assert!(reconstruct_elastic_net(&params(1.0, 1.0, 0.0, 1), &a, &[1.0], 1e-8).is_err());
        assert!(reconstruct_elastic_net(&params(1.0, 1.5, 0.5, 1), &a, &[1.0], 1e-8).is_err());
        assert!(reconstruct_elastic_net(&params(1.0, 1.0, 0.5, 1), &a, &[1.0], 0.0).is_err());
    }

    #[test]
    fn tighter_tolerance_never_increases_residual() {
        let a = ForwardOperator::power_decay(3, 1.0).unwrap();
        let p = ElasticNetParams { h: vec![0.1, 0.2, 0.3], b: Penalty::Scalar(1.5), alpha: 1.0, eta: 0.05 };
        let y = [1.0, 2.0, 3.0];
        let mut last = f64::INFINITY;
        for tol in [1e-4, 5e-5, 2.5e-5, 1.25e-5, 1e-8] {
            let s = reconstruct_elastic_net(&p, &a, &y, tol).unwrap();
            assert!(s.residual <= tol);
            assert!(s.residual <= last);
            last = s.residual;
        }
    }
}
