//! Fixed points of contractive maps
//! `phi_theta(z; y) = gamma S tanh(z + b) + A^T y`, with `gamma = L_z / R`
//! and `R` the largest admissible `||theta||`.
//!
//! `||S||_op <= ||theta|| <= R` makes `phi_theta(.; y)` an `L_z`-contraction
//! for every admissible `theta`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{dist, norm, Matrix};
use crate::operators::ForwardOperator;
use crate::scalar::Scalar;

use super::{Family, Reconstructor};

/// Observed step ratios may exceed `L_z` by this much before the certificate
/// is declared invalid.
pub const RATIO_SLACK: f64 = 1e-6;

const MAX_ITERATIONS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixer {
    /// `S = diag(s)`
    Diagonal,
    /// `S` a full `n x n` matrix, row-major in `theta`.
    Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointArch<T: Scalar> {
    pub mixer: Mixer,
    pub bias: bool,
    /// Largest admissible `||theta||`.
    pub radius: T,
}

impl<T: Scalar> FixedPointArch<T> {
    pub fn param_dim(&self, n: usize) -> usize {
        let s = match self.mixer {
            Mixer::Diagonal => n,
            Mixer::Dense => n * n,
        };
        s + if self.bias { n } else { 0 }
    }

    /// `L_theta / gamma`: `||phi_theta - phi_theta'|| <= gamma c ||theta - theta'||`.
    fn theta_lipschitz_factor(&self, n: usize) -> T {
        let width = match self.mixer {
            Mixer::Diagonal => T::one(),
            Mixer::Dense => T::from_usize_lossy(n),
        };
        if self.bias {
            (width + self.radius * self.radius).sqrt()
        } else {
            width.sqrt()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointParams<T: Scalar> {
    pub theta: Vec<T>,
    pub contraction_budget: T,
    pub arch: FixedPointArch<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution<T: Scalar> {
    pub p: Vec<T>,
    pub iterations: usize,
    /// `||p - phi(p)||`.
    pub gap: T,
    /// Largest observed `||z_{k+1} - z_k|| / ||z_k - z_{k-1}||`.
    pub max_ratio: T,
}

/// Picard iteration from `z0` until `||z_{k+1} - z_k|| <= tol (1 - L_z)`.
///
/// Fails with [`Error::ContractivityViolation`] as soon as one step ratio
/// exceeds `L_z + 1e-6`.
pub fn solve_fixed_point<T: Scalar>(
    phi: impl Fn(&[T]) -> Result<Vec<T>>,
    z0: Vec<T>,
    l_z: T,
    tol: T,
) -> Result<FixedPointSolution<T>> {
    if !(l_z > T::zero() && l_z < T::one()) {
        return invalid(format!("contraction constant must lie in (0, 1), got {}", l_z));
    }
    if !(tol > T::zero()) {
        return invalid("tolerance must be positive");
    }
    let stop = tol * (T::one() - l_z);
    let mut p = z0;
    let mut prev_step: Option<T> = None;
    let mut max_ratio = T::zero();
    for it in 1..=MAX_ITERATIONS {
        let next = phi(&p)?;
        check_len(p.len(), next.len())?;
        let step = dist(&next, &p);
        if !step.is_finite() {
            return Err(Error::NotConverged { iterations: it, residual: f64::INFINITY });
        }
        if let Some(ps) = prev_step {
            // ratios of steps at rounding level carry no information
            let floor = T::lit(64.0) * T::epsilon() * (T::one() + norm(&p));
            if ps > floor && step > floor {
                let ratio = step / ps;
                max_ratio = max_ratio.max(ratio);
                if ratio > l_z + T::lit(RATIO_SLACK) {
                    return Err(Error::ContractivityViolation { observed: ratio.as_f64(), certified: l_z.as_f64() });
                }
            }
        }
        p = next;
        if step <= stop {
            let gap = dist(&phi(&p)?, &p);
            return Ok(FixedPointSolution { p, iterations: it, gap, max_ratio });
        }
        prev_step = Some(step);
    }
    Err(Error::NotConverged { iterations: MAX_ITERATIONS, residual: prev_step.map_or(f64::NAN, |s| s.as_f64()) })
}

#[derive(Clone, Debug)]
pub struct FixedPointFamily<T: Scalar> {
    a: ForwardOperator<T>,
    arch: FixedPointArch<T>,
    contraction: T,
    tol: T,
}

impl<T: Scalar> FixedPointFamily<T> {
    pub fn new(a: ForwardOperator<T>, arch: FixedPointArch<T>, contraction_budget: T, tol: T) -> Result<Self> {
        if !(contraction_budget > T::zero() && contraction_budget < T::one()) {
            return invalid(format!(
                "contraction budget L_z = {} is not in (0, 1); the fixed-point map is not certified contractive",
                contraction_budget
            ));
        }
        if !(arch.radius > T::zero()) || !arch.radius.is_finite() {
            return invalid("parameter radius must be positive and finite");
        }
        if !(tol > T::zero()) {
            return invalid("tolerance must be positive");
        }
        Ok(Self { a, arch, contraction: contraction_budget, tol })
    }

    pub fn arch(&self) -> &FixedPointArch<T> {
        &self.arch
    }

    pub fn contraction(&self) -> T {
        self.contraction
    }

    pub fn tol(&self) -> T {
        self.tol
    }

    pub fn gamma(&self) -> T {
        self.contraction / self.arch.radius
    }

    /// `L_theta`, the Lipschitz constant of `theta -> phi_theta(z; y)`.
    pub fn l_theta(&self) -> T {
        self.gamma() * self.arch.theta_lipschitz_factor(self.a.n_x())
    }

    /// `L_theta / (1 - L_z)`.
    pub fn transfer_constant(&self) -> T {
        self.l_theta() / (T::one() - self.contraction)
    }

    fn check_theta(&self, theta: &[T]) -> Result<()> {
        check_len(self.arch.param_dim(self.a.n_x()), theta.len())?;
        if norm(theta) > self.arch.radius * (T::one() + T::lit(1e-12)) {
            return invalid(format!(
                "||theta|| = {} exceeds the certified radius {}",
                norm(theta),
                self.arch.radius
            ));
        }
        Ok(())
    }
}

struct BoundMap<'a, T: Scalar> {
    fam: &'a FixedPointFamily<T>,
    s: Vec<T>,
    b: Option<Vec<T>>,
}

impl<T: Scalar> BoundMap<'_, T> {
    fn phi(&self, z: &[T], aty: &[T]) -> Vec<T> {
        let n = z.len();
        let act: Vec<T> = match &self.b {
            Some(b) => z.iter().zip(b).map(|(&zi, &bi)| (zi + bi).tanh()).collect(),
            None => z.iter().map(|zi| zi.tanh()).collect(),
        };
        let mixed: Vec<T> = match self.fam.arch.mixer {
            Mixer::Diagonal => act.iter().zip(&self.s).map(|(&a, &s)| a * s).collect(),
            Mixer::Dense => (0..n).map(|i| crate::linalg::dot(&self.s[i * n..(i + 1) * n], &act)).collect(),
        };
        let g = self.fam.gamma();
        mixed.iter().zip(aty).map(|(&m, &c)| g * m + c).collect()
    }
}

impl<T: Scalar> Reconstructor<T> for BoundMap<'_, T> {
    fn reconstruct(&self, y: &[T]) -> Result<Vec<T>> {
        Ok(self.solve(y)?.p)
    }
}

impl<T: Scalar> BoundMap<'_, T> {
    fn solve(&self, y: &[T]) -> Result<FixedPointSolution<T>> {
        let aty = self.fam.a.adjoint_apply(y)?;
        let z0 = vec![T::zero(); aty.len()];
        solve_fixed_point(|z| Ok(self.phi(z, &aty)), z0, self.fam.contraction, self.fam.tol)
    }
}

impl<T: Scalar> Family<T> for FixedPointFamily<T> {
    fn name(&self) -> &'static str {
        "fixed_point"
    }

    fn param_dim(&self) -> usize {
        self.arch.param_dim(self.a.n_x())
    }

    fn bind<'a>(&'a self, theta: &[T]) -> Result<Box<dyn Reconstructor<T> + 'a>> {
        self.check_theta(theta)?;
        let n = self.a.n_x();
        let s_len = self.param_dim() - if self.arch.bias { n } else { 0 };
        let (s, b) = theta.split_at(s_len);
        Ok(Box::new(BoundMap { fam: self, s: s.to_vec(), b: self.arch.bias.then(|| b.to_vec()) }))
    }

    /// Lipschitz transfer: `||p_theta - p_theta'|| <= L_theta / (1 - L_z) d`.
    fn stability_bound(&self) -> Option<(T, T)> {
        Some((T::zero(), self.transfer_constant()))
    }
}

/// Runs the Picard iteration for explicit parameters.
pub fn reconstruct_fixed_point<T: Scalar>(
    params: &FixedPointParams<T>,
    a: &ForwardOperator<T>,
    y: &[T],
    tol: T,
) -> Result<FixedPointSolution<T>> {
    let fam = FixedPointFamily::new(a.clone(), params.arch.clone(), params.contraction_budget, tol)?;
    fam.check_theta(&params.theta)?;
    let n = a.n_x();
    let s_len = fam.param_dim() - if fam.arch.bias { n } else { 0 };
    let (s, b) = params.theta.split_at(s_len);
    BoundMap { fam: &fam, s: s.to_vec(), b: fam.arch.bias.then(|| b.to_vec()) }.solve(y)
}

/// Dense `S` from a flat parameter vector (for inspection).
pub fn mixer_matrix<T: Scalar>(arch: &FixedPointArch<T>, n: usize, theta: &[T]) -> Result<Matrix<T>> {
    check_len(arch.param_dim(n), theta.len())?;
    Ok(match arch.mixer {
        Mixer::Diagonal => Matrix::from_diag(&theta[..n]),
        Mixer::Dense => Matrix::from_row_major(n, n, theta[..n * n].to_vec())?,
    })
}
