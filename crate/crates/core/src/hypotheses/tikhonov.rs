//! Learned generalized Tikhonov:
//! `R_theta(y) = argmin_x 0.5 ||Ax - y||^2_W + ||B(x - h)||^2` with `W` the
//! inverse noise covariance.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{add, dot, scale, sub, Cholesky, Matrix};
use crate::operators::{ForwardOperator, GaussianSpec};
use crate::scalar::Scalar;

use super::penalty::{BMode, Penalty, PenaltyLayout};
use super::{Family, Reconstructor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TikhonovParams<T: Scalar> {
    pub h: Vec<T>,
    #[serde(rename = "B")]
    pub b: Penalty<T>,
}

/// Precomputed `A^T W A` and `A^T W`.
#[derive(Clone, Debug)]
struct NormalSystem<T> {
    ata: Matrix<T>,
    atw: Matrix<T>,
}

impl<T: Scalar> NormalSystem<T> {
    fn new(a: &ForwardOperator<T>, weight: &Matrix<T>) -> Result<Self> {
        if weight.rows() != a.n_y() || weight.cols() != a.n_y() {
            return Err(Error::DimensionMismatch { expected: a.n_y(), found: weight.rows() });
        }
        let dense = a.to_dense();
        let atw = dense.transpose().matmul(weight)?;
        let ata = atw.matmul(&dense)?;
        Ok(Self { ata, atw })
    }

    fn from_noise(a: &ForwardOperator<T>, noise: &GaussianSpec<T>) -> Result<Self> {
        check_len(a.n_y(), noise.dim())?;
        let precision = Cholesky::new(&noise.covariance())
            .map_err(|_| Error::Singular("noise covariance is not positive definite".into()))?
            .inverse();
        Self::new(a, &precision)
    }

    /// Normal matrix `A^T W A + 2 B^T B`, factored.
    fn factor(&self, gram: &Matrix<T>) -> Result<(Matrix<T>, Cholesky<T>)> {
        let m = self.ata.add(&gram.scaled(T::lit(2.0)))?;
        let chol = Cholesky::new(&m).map_err(|_| {
            Error::Singular("normal matrix A^T W A + 2 B^T B is singular; ker B overlaps ker A".into())
        })?;
        Ok((m, chol))
    }
}

struct Bound<T: Scalar> {
    normal: Matrix<T>,
    chol: Cholesky<T>,
    /// `2 B^T B h`
    shift: Vec<T>,
    gram: Matrix<T>,
    h: Vec<T>,
    b: Penalty<T>,
}

impl<T: Scalar> Bound<T> {
    fn new(sys: &NormalSystem<T>, h: Vec<T>, b: Penalty<T>) -> Result<Self> {
        let n = sys.ata.rows();
        check_len(n, h.len())?;
        b.check_dim(n)?;
        let gram = b.gram(n);
        let (normal, chol) = sys.factor(&gram)?;
        let shift = scale(&gram.matvec(&h)?, T::lit(2.0));
        Ok(Self { normal, chol, shift, gram, h, b })
    }

    /// Solves with one step of iterative refinement.
    fn solve(&self, sys: &NormalSystem<T>, y: &[T]) -> Result<Vec<T>> {
        let rhs = add(&sys.atw.matvec(y)?, &self.shift);
        let mut x = self.chol.solve(&rhs)?;
        let r = sub(&rhs, &self.normal.matvec(&x)?);
        let dx = self.chol.solve(&r)?;
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += *b);
        Ok(x)
    }
}

struct BoundMap<'a, T: Scalar> {
    sys: &'a NormalSystem<T>,
    inner: Bound<T>,
}

impl<T: Scalar> Reconstructor<T> for BoundMap<'_, T> {
    fn reconstruct(&self, y: &[T]) -> Result<Vec<T>> {
        self.inner.solve(self.sys, y)
    }
}

/// The Tikhonov minimizer `(A^T W A + 2 B^T B)^{-1} (A^T W y + 2 B^T B h)`
/// with `W` the inverse of the noise covariance.
pub fn reconstruct_tikhonov<T: Scalar>(
    params: &TikhonovParams<T>,
    a: &ForwardOperator<T>,
    noise: &GaussianSpec<T>,
    y: &[T],
) -> Result<Vec<T>> {
    let sys = NormalSystem::from_noise(a, noise)?;
    Bound::new(&sys, params.h.clone(), params.b.clone())?.solve(&sys, y)
}

#[derive(Clone, Debug)]
pub struct TikhonovFamily<T: Scalar> {
    layout: PenaltyLayout<T>,
    sys: NormalSystem<T>,
}

impl<T: Scalar> TikhonovFamily<T> {
    /// Data term weighted by the inverse noise covariance.
    pub fn new(a: &ForwardOperator<T>, noise: &GaussianSpec<T>, layout: PenaltyLayout<T>) -> Result<Self> {
        check_len(a.n_x(), layout.n)?;
        Ok(Self { layout, sys: NormalSystem::from_noise(a, noise)? })
    }

    /// Data term weighted by an explicit symmetric positive semi-definite `W`.
    pub fn with_weight(a: &ForwardOperator<T>, weight: &Matrix<T>, layout: PenaltyLayout<T>) -> Result<Self> {
        check_len(a.n_x(), layout.n)?;
        Ok(Self { layout, sys: NormalSystem::new(a, weight)? })
    }

    /// Unweighted data term (`W = I`), used when the noise is degenerate or
    /// not Gaussian.
    pub fn unweighted(a: &ForwardOperator<T>, layout: PenaltyLayout<T>) -> Result<Self> {
        Self::with_weight(a, &Matrix::identity(a.n_y()), layout)
    }

    pub fn layout(&self) -> &PenaltyLayout<T> {
        &self.layout
    }

    pub fn params(&self, theta: &[T]) -> Result<TikhonovParams<T>> {
        let (h, b) = self.layout.unpack(theta)?;
        Ok(TikhonovParams { h, b })
    }

    fn bound(&self, theta: &[T]) -> Result<Bound<T>> {
        let (h, b) = self.layout.unpack(theta)?;
        Bound::new(&self.sys, h, b)
    }
}

impl<T: Scalar> Family<T> for TikhonovFamily<T> {
    fn name(&self) -> &'static str {
        "tikhonov"
    }

    fn param_dim(&self) -> usize {
        self.layout.param_dim()
    }

    fn bind<'a>(&'a self, theta: &[T]) -> Result<Box<dyn Reconstructor<T> + 'a>> {
        Ok(Box::new(BoundMap { sys: &self.sys, inner: self.bound(theta)? }))
    }

    fn param_distance(&self, a: &[T], b: &[T]) -> T {
        self.layout.distance(a, b)
    }

    // With M the normal matrix, C = B^T B, r = R - x, v = M^{-1} r, w = h - R:
    // d loss/dh = 2 C v and d loss/dB = 2 [(Bw) v^T + (Bv) w^T].
    fn loss_gradient(&self, theta: &[T], pairs: &[(Vec<T>, Vec<T>)]) -> Option<Result<(T, Vec<T>)>> {
        let run = || -> Result<(T, Vec<T>)> {
            let bd = self.bound(theta)?;
            let n = self.layout.n;
            let mut loss = T::zero();
            let mut grad_h = vec![T::zero(); n];
            let mut grad_b = Matrix::zeros(n, n);
            for (x, y) in pairs {
                let rec = bd.solve(&self.sys, y)?;
                let r = sub(&rec, x);
                loss += T::lit(0.5) * dot(&r, &r);
                let v = bd.chol.solve(&r)?;
                let w = sub(&bd.h, &rec);
                let cv = bd.gram.matvec(&v)?;
                grad_h.iter_mut().zip(&cv).for_each(|(g, c)| *g += T::lit(2.0) * *c);
                let bw = bd.b.apply(&w);
                let bv = bd.b.apply(&v);
                for i in 0..n {
                    for j in 0..n {
                        grad_b[(i, j)] += T::lit(2.0) * (bw[i] * v[j] + bv[i] * w[j]);
                    }
                }
            }
            Ok((loss, self.layout.fold_gradient(&grad_h, &grad_b)))
        };
        Some(run())
    }

    /// With `B` fixed only `h` varies, and
    /// `R_h(y) - R_h'(y) = 2 M^{-1} B^T B (h - h')`, so `L = 0` and
    /// `L' = ||2 M^{-1} B^T B||`.
    fn stability_bound(&self) -> Option<(T, T)> {
        let BMode::Fixed(b) = &self.layout.b else {
            return None;
        };
        let n = self.layout.n;
        let gram = b.gram(n);
        let (_, chol) = self.sys.factor(&gram).ok()?;
        let k = chol.inverse().matmul(&gram).ok()?.scaled(T::lit(2.0));
        Some((T::zero(), k.operator_norm()))
    }
}
