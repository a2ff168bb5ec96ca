//! Linear forward operators stored through their singular systems, Gaussian
//! laws on the discretized spaces, and the linear-Gaussian conditional-mean
//! estimator.
//!
//! An operator is `A = U diag(sigma) V^T` where the columns of `U` (size
//! `n_y`) and `V` (size `n_x`) are orthonormal and only the leading
//! `min(n_x, n_y)` columns carry singular values. Ill-posedness is controlled
//! directly through the decay of `sigma`, e.g. `sigma_k = k^-p`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{self, dot, Matrix};
use crate::scalar::Scalar;

fn ortho_tol<T: Scalar>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(64.0))
}

/// Orthonormal basis of a finite-dimensional space.
#[derive(Clone, Debug, PartialEq)]
pub enum Basis<T> {
    Identity(usize),
    /// Columns are the basis vectors.
    Dense(Matrix<T>),
}

impl<T: Scalar> Basis<T> {
    pub fn dense(m: Matrix<T>) -> Result<Self> {
        if !m.is_square() {
            return invalid("basis matrix must be square");
        }
        let defect = m.orthonormality_defect();
        if defect > ortho_tol() {
            return invalid(format!("basis is not orthonormal (defect {:e})", defect.as_f64()));
        }
        Ok(Basis::Dense(m))
    }

    pub fn dim(&self) -> usize {
        match self {
            Basis::Identity(n) => *n,
            Basis::Dense(m) => m.rows(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Basis::Identity(_))
    }

    /// `k`-th basis vector.
    pub fn vector(&self, k: usize) -> Vec<T> {
        match self {
            Basis::Identity(n) => {
                let mut e = vec![T::zero(); *n];
                e[k] = T::one();
                e
            }
            Basis::Dense(m) => m.column(k),
        }
    }

    /// First `k` coordinates of `v` in this basis.
    pub fn analyze(&self, v: &[T], k: usize) -> Vec<T> {
        match self {
            Basis::Identity(_) => v[..k].to_vec(),
            Basis::Dense(m) => {
                let mut c = vec![T::zero(); k];
                for (i, &vi) in v.iter().enumerate() {
                    let row = m.row(i);
                    for j in 0..k {
                        c[j] += row[j] * vi;
                    }
                }
                c
            }
        }
    }

    /// `sum_k c_k q_k` for the first `c.len()` basis vectors.
    pub fn synthesize(&self, c: &[T]) -> Vec<T> {
        let n = self.dim();
        match self {
            Basis::Identity(_) => {
                let mut out = vec![T::zero(); n];
                out[..c.len()].copy_from_slice(c);
                out
            }
            Basis::Dense(m) => (0..n).map(|i| dot(&m.row(i)[..c.len()], c)).collect(),
        }
    }

    pub fn to_matrix(&self) -> Matrix<T> {
        match self {
            Basis::Identity(n) => Matrix::identity(*n),
            Basis::Dense(m) => m.clone(),
        }
    }
}

/// JSON form of a basis: the string `"identity"` or a square matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasisJson<T: Scalar> {
    Named(String),
    Matrix(Matrix<T>),
}

impl<T: Scalar> BasisJson<T> {
    fn resolve(self, n: usize) -> Result<Basis<T>> {
        match self {
            BasisJson::Named(s) if s == "identity" => Ok(Basis::Identity(n)),
            BasisJson::Named(s) => invalid(format!("unknown basis `{s}`")),
            BasisJson::Matrix(m) => {
                check_len(n, m.rows())?;
                Basis::dense(m)
            }
        }
    }

    fn of(b: &Basis<T>) -> Self {
        match b {
            Basis::Identity(_) => BasisJson::Named("identity".into()),
            Basis::Dense(m) => BasisJson::Matrix(m.clone()),
        }
    }
}

/// Bounded linear map `A: R^{n_x} -> R^{n_y}` in singular-system form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorJson<T>", into = "OperatorJson<T>", bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct ForwardOperator<T: Scalar> {
    n_x: usize,
    n_y: usize,
    singular_values: Vec<T>,
    left: Basis<T>,
    right: Basis<T>,
    decay_exponent: Option<T>,
}

impl<T: Scalar> ForwardOperator<T> {
    pub fn new(
        n_x: usize,
        n_y: usize,
        singular_values: Vec<T>,
        left: Basis<T>,
        right: Basis<T>,
    ) -> Result<Self> {
        if n_x == 0 || n_y == 0 {
            return invalid("operator dimensions must be positive");
        }
        check_len(n_x.min(n_y), singular_values.len())?;
        check_len(n_y, left.dim())?;
        check_len(n_x, right.dim())?;
        if singular_values.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
            return invalid("singular values must be strictly positive and finite");
        }
        if singular_values.windows(2).any(|w| w[1] > w[0]) {
            return invalid("singular values must be non-increasing");
        }
        Ok(Self { n_x, n_y, singular_values, left, right, decay_exponent: None })
    }

    /// Square operator with the given (non-increasing) diagonal.
    pub fn diagonal(diag: Vec<T>) -> Result<Self> {
        let n = diag.len();
        Self::new(n, n, diag, Basis::Identity(n), Basis::Identity(n))
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(vec![T::one(); n]).expect("identity is a valid operator")
    }

    /// `sigma_k = k^-p` in the canonical bases.
    pub fn power_decay(n: usize, p: T) -> Result<Self> {
        if !(p > T::zero()) {
            return invalid("decay exponent must be positive");
        }
        let sv = (1..=n).map(|k| T::from_usize_lossy(k).powf(-p)).collect();
        let mut op = Self::diagonal(sv)?;
        op.decay_exponent = Some(p);
        Ok(op)
    }

    /// Same spectrum with Haar-random left and right singular bases.
    pub fn with_random_bases<R: Rng + ?Sized>(
        n_x: usize,
        n_y: usize,
        singular_values: Vec<T>,
        rng: &mut R,
    ) -> Result<Self> {
        let left = Basis::Dense(linalg::random_orthogonal(n_y, rng));
        let right = Basis::Dense(linalg::random_orthogonal(n_x, rng));
        Self::new(n_x, n_y, singular_values, left, right)
    }

    pub fn with_decay_exponent(mut self, p: T) -> Self {
        self.decay_exponent = Some(p);
        self
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn singular_values(&self) -> &[T] {
        &self.singular_values
    }

    pub fn decay_exponent(&self) -> Option<T> {
        self.decay_exponent
    }

    pub fn left_basis(&self) -> &Basis<T> {
        &self.left
    }

    pub fn right_basis(&self) -> &Basis<T> {
        &self.right
    }

    /// `A x`
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.n_x, x.len())?;
        let k = self.singular_values.len();
        let mut c = self.right.analyze(x, k);
        c.iter_mut().zip(&self.singular_values).for_each(|(ci, &s)| *ci *= s);
        Ok(self.left.synthesize(&c))
    }

    /// `A* y`
    pub fn adjoint_apply(&self, y: &[T]) -> Result<Vec<T>> {
        check_len(self.n_y, y.len())?;
        let k = self.singular_values.len();
        let mut c = self.left.analyze(y, k);
        c.iter_mut().zip(&self.singular_values).for_each(|(ci, &s)| *ci *= s);
        Ok(self.right.synthesize(&c))
    }

    /// Dense `n_y x n_x` matrix of the operator.
    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.n_y, self.n_x);
        for j in 0..self.n_x {
            let e = Basis::<T>::Identity(self.n_x).vector(j);
            let col = self.apply(&e).expect("dimension checked");
            for i in 0..self.n_y {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    /// Largest singular value.
    pub fn norm(&self) -> T {
        self.singular_values[0]
    }

    /// Operator norm by power iteration on `A* A`, independent of the stored
    /// spectrum.
    pub fn power_iteration_norm(&self, rel_tol: T, max_iter: usize) -> T {
        let n = self.n_x;
        // deterministic start with all modes present
        let mut v: Vec<T> = (0..n).map(|i| T::one() + T::lit(0.1) * T::from_usize_lossy(i)).collect();
        let nv = linalg::norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut est = T::zero();
        for _ in 0..max_iter {
            let w = self.adjoint_apply(&self.apply(&v).expect("dim")).expect("dim");
            let nw = linalg::norm(&w);
            if nw == T::zero() {
                return T::zero();
            }
            let next = nw.sqrt();
            v = w.into_iter().map(|x| x / nw).collect();
            if (next - est).abs() <= rel_tol * next {
                return next;
            }
            est = next;
        }
        est
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
struct OperatorJson<T: Scalar> {
    n_x: usize,
    n_y: usize,
    singular_values: Vec<T>,
    basis: OperatorBasisJson<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decay_exponent: Option<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
enum OperatorBasisJson<T: Scalar> {
    Shared(BasisJson<T>),
    Pair { left: BasisJson<T>, right: BasisJson<T> },
}

impl<T: Scalar> TryFrom<OperatorJson<T>> for ForwardOperator<T> {
    type Error = Error;
    fn try_from(j: OperatorJson<T>) -> Result<Self> {
        let (left, right) = match j.basis {
            OperatorBasisJson::Shared(b) => {
                if j.n_x != j.n_y && !matches!(&b, BasisJson::Named(_)) {
                    return invalid("a single basis matrix needs n_x == n_y; use {left, right}");
                }
                (b.clone().resolve(j.n_y)?, b.resolve(j.n_x)?)
            }
            OperatorBasisJson::Pair { left, right } => (left.resolve(j.n_y)?, right.resolve(j.n_x)?),
        };
        let mut op = Self::new(j.n_x, j.n_y, j.singular_values, left, right)?;
        op.decay_exponent = j.decay_exponent;
        Ok(op)
    }
}

impl<T: Scalar> From<ForwardOperator<T>> for OperatorJson<T> {
    fn from(op: ForwardOperator<T>) -> Self {
        let basis = match (&op.left, &op.right) {
            (Basis::Identity(_), Basis::Identity(_)) => OperatorBasisJson::Shared(BasisJson::Named("identity".into())),
            (l, r) if l == r => OperatorBasisJson::Shared(BasisJson::of(l)),
            (l, r) => OperatorBasisJson::Pair { left: BasisJson::of(l), right: BasisJson::of(r) },
        };
        OperatorJson {
            n_x: op.n_x,
            n_y: op.n_y,
            singular_values: op.singular_values,
            basis,
            decay_exponent: op.decay_exponent,
        }
    }
}

/// Gaussian law `N(mean, Q diag(lambda) Q^T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianJson<T>", into = "GaussianJson<T>", bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct GaussianSpec<T: Scalar> {
    mean: Vec<T>,
    eigenvalues: Vec<T>,
    basis: Basis<T>,
}

impl<T: Scalar> GaussianSpec<T> {
    pub fn new(mean: Vec<T>, eigenvalues: Vec<T>, basis: Basis<T>) -> Result<Self> {
        check_len(eigenvalues.len(), mean.len())?;
        check_len(eigenvalues.len(), basis.dim())?;
        if eigenvalues.is_empty() {
            return invalid("gaussian dimension must be positive");
        }
        if eigenvalues.iter().any(|l| !(*l >= T::zero()) || !l.is_finite()) {
            return invalid("covariance eigenvalues must be finite and nonnegative");
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return invalid("mean must be finite");
        }
        Ok(Self { mean, eigenvalues, basis })
    }

    /// Zero-mean law with diagonal covariance.
    pub fn centered(eigenvalues: Vec<T>) -> Result<Self> {
        let n = eigenvalues.len();
        Self::new(vec![T::zero(); n], eigenvalues, Basis::Identity(n))
    }

    pub fn isotropic(n: usize, variance: T) -> Result<Self> {
        Self::centered(vec![variance; n])
    }

    pub fn with_mean(mut self, mean: Vec<T>) -> Result<Self> {
        check_len(self.dim(), mean.len())?;
        self.mean = mean;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &Basis<T> {
        &self.basis
    }

    pub fn trace(&self) -> T {
        self.eigenvalues.iter().copied().sum()
    }

    /// Largest covariance eigenvalue.
    pub fn spectral_norm(&self) -> T {
        self.eigenvalues.iter().copied().fold(T::zero(), T::max)
    }

    pub fn is_centered(&self) -> bool {
        self.mean.iter().all(|m| *m == T::zero())
    }

    pub fn covariance(&self) -> Matrix<T> {
        let q = self.basis.to_matrix();
        let n = self.dim();
        let mut c = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] = (0..n).map(|k| q[(i, k)] * self.eigenvalues[k] * q[(j, k)]).sum();
            }
        }
        c
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let coeffs: Vec<T> = self
            .eigenvalues
            .iter()
            .map(|&l| l.sqrt() * T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        linalg::add(&self.basis.synthesize(&coeffs), &self.mean)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
struct GaussianJson<T: Scalar> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<Vec<T>>,
    eigenvalues: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis: Option<BasisJson<T>>,
}

impl<T: Scalar> TryFrom<GaussianJson<T>> for GaussianSpec<T> {
    type Error = Error;
    fn try_from(j: GaussianJson<T>) -> Result<Self> {
        let n = j.eigenvalues.len();
        let basis = match j.basis {
            Some(b) => b.resolve(n)?,
            None => Basis::Identity(n),
        };
        Self::new(j.mean.unwrap_or_else(|| vec![T::zero(); n]), j.eigenvalues, basis)
    }
}

impl<T: Scalar> From<GaussianSpec<T>> for GaussianJson<T> {
    fn from(g: GaussianSpec<T>) -> Self {
        GaussianJson {
            mean: if g.is_centered() { None } else { Some(g.mean) },
            basis: if g.basis.is_identity() { None } else { Some(BasisJson::of(&g.basis)) },
            eigenvalues: g.eigenvalues,
        }
    }
}

/// Affine reconstruction map `y -> G y + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap<T> {
    pub gain: Matrix<T>,
    pub offset: Vec<T>,
}

impl<T: Scalar> AffineMap<T> {
    pub fn apply(&self, y: &[T]) -> Result<Vec<T>> {
        Ok(linalg::add(&self.gain.matvec(y)?, &self.offset))
    }
}

/// Conditional-mean estimator of a jointly Gaussian linear model together
/// with its expected quadratic loss.
#[derive(Clone, Debug)]
pub struct MmseEstimator<T> {
    pub map: AffineMap<T>,
    pub posterior_covariance: Matrix<T>,
    /// `E[0.5 |R(y) - x|^2]`, half the trace of the posterior covariance.
    pub irreducible_error: T,
}

/// Bayes estimator for `y = A x + e`, `x ~ prior`, `e ~ noise` independent.
///
/// `R(y) = m_x + S_x A* (A S_x A* + S_e)^-1 (y - A m_x - m_e)`.
pub fn mmse_affine<T: Scalar>(
    a: &ForwardOperator<T>,
    prior: &GaussianSpec<T>,
    noise: &GaussianSpec<T>,
) -> Result<MmseEstimator<T>> {
    check_len(a.n_x(), prior.dim())?;
    check_len(a.n_y(), noise.dim())?;
    let ad = a.to_dense();
    let sx = prior.covariance();
    let a_sx = ad.matmul(&sx)?;
    let innovation = a_sx.matmul(&ad.transpose())?.add(&noise.covariance())?;
    let chol = innovation
        .cholesky()
        .map_err(|_| Error::Singular("innovation covariance A S_x A* + S_e is singular".into()))?;
    // X = S^-1 (A S_x), gain = X^T
    let mut x = Matrix::zeros(a.n_y(), a.n_x());
    for j in 0..a.n_x() {
        let col = chol.solve(&a_sx.column(j))?;
        for i in 0..a.n_y() {
            x[(i, j)] = col[i];
        }
    }
    let gain = x.transpose();
    let posterior = sx.sub(&gain.matmul(&a_sx)?)?;
    let predicted = linalg::add(&a.apply(prior.mean())?, noise.mean());
    let offset = linalg::sub(prior.mean(), &gain.matvec(&predicted)?);
    let irreducible = (posterior.trace() * T::lit(0.5)).max(T::zero());
    Ok(MmseEstimator { map: AffineMap { gain, offset }, posterior_covariance: posterior, irreducible_error: irreducible })
}
