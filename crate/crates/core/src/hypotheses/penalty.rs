//! The `(h, B)` parametrization shared by the Tikhonov and Elastic-Net
//! families.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::linalg::{dist, Matrix};
use crate::scalar::Scalar;

/// A linear map `B: X -> X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty<T: Scalar> {
    /// `b I`
    Scalar(T),
    Diagonal(Vec<T>),
    Dense(Matrix<T>),
}

impl<T: Scalar> Penalty<T> {
    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self {
            Penalty::Scalar(_) => Ok(()),
            Penalty::Diagonal(d) => check_len(n, d.len()),
            Penalty::Dense(m) => {
                if m.rows() != n || m.cols() != n {
                    return invalid(format!("B must be {n}x{n}, got {}x{}", m.rows(), m.cols()));
                }
                Ok(())
            }
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        match self {
            Penalty::Scalar(b) => x.iter().map(|&v| *b * v).collect(),
            Penalty::Diagonal(d) => x.iter().zip(d).map(|(&v, &b)| b * v).collect(),
            Penalty::Dense(m) => m.matvec(x).expect("dimension checked"),
        }
    }

    pub fn apply_transpose(&self, x: &[T]) -> Vec<T> {
        match self {
            Penalty::Dense(m) => m.tr_matvec(x).expect("dimension checked"),
            _ => self.apply(x),
        }
    }

    pub fn to_matrix(&self, n: usize) -> Matrix<T> {
        match self {
            Penalty::Scalar(b) => Matrix::identity(n).scaled(*b),
            Penalty::Diagonal(d) => Matrix::from_diag(d),
            Penalty::Dense(m) => m.clone(),
        }
    }

    /// `B^T B`.
    pub fn gram(&self, n: usize) -> Matrix<T> {
        match self {
            Penalty::Scalar(b) => Matrix::identity(n).scaled(*b * *b),
            Penalty::Diagonal(d) => Matrix::from_diag(&d.iter().map(|&v| v * v).collect::<Vec<_>>()),
            Penalty::Dense(m) => m.transpose().matmul(m).expect("square"),
        }
    }

    pub fn op_norm(&self) -> T {
        match self {
            Penalty::Scalar(b) => b.abs(),
            Penalty::Diagonal(d) => d.iter().fold(T::zero(), |a, v| a.max(v.abs())),
            Penalty::Dense(m) => m.operator_norm(),
        }
    }

    /// Operator norm of `B - B'`.
    pub fn distance(&self, other: &Self, n: usize) -> T {
        match (self, other) {
            (Penalty::Scalar(a), Penalty::Scalar(b)) => (*a - *b).abs(),
            (Penalty::Diagonal(a), Penalty::Diagonal(b)) => {
                a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc.max((*x - *y).abs()))
            }
            _ => self.to_matrix(n).sub(&other.to_matrix(n)).expect("same shape").operator_norm(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyShape {
    Scalar,
    Diagonal,
    Dense,
}

/// Whether `h` is learned or held fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HMode<T: Scalar> {
    Free,
    Fixed(Vec<T>),
}

/// Whether `B` is learned (with the given structure) or held fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BMode<T: Scalar> {
    Learned(PenaltyShape),
    Fixed(Penalty<T>),
}

/// Layout of `theta = (h, B)` as a flat vector: the free entries of `h`
/// first, then the free entries of `B` (one, `n`, or `n * n` row-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyLayout<T: Scalar> {
    pub n: usize,
    pub h: HMode<T>,
    pub b: BMode<T>,
}

impl<T: Scalar> PenaltyLayout<T> {
    pub fn new(n: usize, h: HMode<T>, b: BMode<T>) -> Result<Self> {
        if n == 0 {
            return invalid("dimension must be positive");
        }
        if let HMode::Fixed(h) = &h {
            check_len(n, h.len())?;
        }
        if let BMode::Fixed(b) = &b {
            b.check_dim(n)?;
        }
        Ok(Self { n, h, b })
    }

    /// `h` free, `B = b I` with `b` learned.
    pub fn scalar_free_h(n: usize) -> Self {
        Self { n, h: HMode::Free, b: BMode::Learned(PenaltyShape::Scalar) }
    }

    /// `h = 0`, `B = b I` with `b` the only parameter.
    pub fn scalar_shrinkage(n: usize) -> Self {
        Self { n, h: HMode::Fixed(vec![T::zero(); n]), b: BMode::Learned(PenaltyShape::Scalar) }
    }

    fn h_len(&self) -> usize {
        match self.h {
            HMode::Free => self.n,
            HMode::Fixed(_) => 0,
        }
    }

    fn b_len(&self) -> usize {
        match self.b {
            BMode::Learned(PenaltyShape::Scalar) => 1,
            BMode::Learned(PenaltyShape::Diagonal) => self.n,
            BMode::Learned(PenaltyShape::Dense) => self.n * self.n,
            BMode::Fixed(_) => 0,
        }
    }

    pub fn param_dim(&self) -> usize {
        self.h_len() + self.b_len()
    }

    pub fn unpack(&self, theta: &[T]) -> Result<(Vec<T>, Penalty<T>)> {
        check_len(self.param_dim(), theta.len())?;
        let (hs, bs) = theta.split_at(self.h_len());
        let h = match &self.h {
            HMode::Free => hs.to_vec(),
            HMode::Fixed(h) => h.clone(),
        };
        let b = match &self.b {
            BMode::Learned(PenaltyShape::Scalar) => Penalty::Scalar(bs[0]),
            BMode::Learned(PenaltyShape::Diagonal) => Penalty::Diagonal(bs.to_vec()),
            BMode::Learned(PenaltyShape::Dense) => Penalty::Dense(Matrix::from_row_major(self.n, self.n, bs.to_vec())?),
            BMode::Fixed(b) => b.clone(),
        };
        Ok((h, b))
    }

    pub fn pack(&self, h: &[T], b: &Penalty<T>) -> Result<Vec<T>> {
        b.check_dim(self.n)?;
        let mut theta = match self.h {
            HMode::Free => {
                check_len(self.n, h.len())?;
                h.to_vec()
            }
            HMode::Fixed(_) => Vec::new(),
        };
        match (&self.b, b) {
            (BMode::Learned(PenaltyShape::Scalar), Penalty::Scalar(v)) => theta.push(*v),
            (BMode::Learned(PenaltyShape::Diagonal), Penalty::Diagonal(d)) => theta.extend_from_slice(d),
            (BMode::Learned(PenaltyShape::Dense), p) => theta.extend_from_slice(p.to_matrix(self.n).as_slice()),
            (BMode::Fixed(fixed), p) if fixed == p => {}
            _ => return invalid("penalty does not match the layout"),
        }
        Ok(theta)
    }

    /// `||h - h'|| + ||B - B'||_op`.
    pub fn distance(&self, a: &[T], b: &[T]) -> T {
        let (ha, ba) = self.unpack(a).expect("parameter length");
        let (hb, bb) = self.unpack(b).expect("parameter length");
        dist(&ha, &hb) + ba.distance(&bb, self.n)
    }

    /// Folds `d loss / dh` and `d loss / dB` (as a full matrix) into the flat
    /// parameter layout.
    pub(crate) fn fold_gradient(&self, grad_h: &[T], grad_b: &Matrix<T>) -> Vec<T> {
        let mut g = match self.h {
            HMode::Free => grad_h.to_vec(),
            HMode::Fixed(_) => Vec::new(),
        };
        match self.b {
            BMode::Learned(PenaltyShape::Scalar) => g.push(grad_b.trace()),
            BMode::Learned(PenaltyShape::Diagonal) => g.extend((0..self.n).map(|i| grad_b[(i, i)])),
            BMode::Learned(PenaltyShape::Dense) => g.extend_from_slice(grad_b.as_slice()),
            BMode::Fixed(_) => {}
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_unpack_roundtrip() {
        let l = PenaltyLayout::<f64>::new(2, HMode::Free, BMode::Learned(PenaltyShape::Dense)).unwrap();
        let theta = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let (h, b) = l.unpack(&theta).unwrap();
        assert_eq!(h, vec![1.0, 2.0]);
        assert_eq!(b.apply(&[1.0, 0.0]), vec![3.0, 5.0]);
        assert_eq!(l.pack(&h, &b).unwrap(), theta);
    }

    #[test]
    fn distance_is_vector_plus_operator_norm() {
        let l = PenaltyLayout::<f64>::new(2, HMode::Free, BMode::Learned(PenaltyShape::Diagonal)).unwrap();
        let d = l.distance(&[0.0, 0.0, 1.0, 1.0], &[3.0, 4.0, 1.5, 0.0]);
        assert!((d - 6.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_h_is_not_a_parameter() {
        let l = PenaltyLayout::new(3, HMode::Fixed(vec![1.0, 0.0, 0.0]), BMode::Learned(PenaltyShape::Scalar)).unwrap();
        assert_eq!(l.param_dim(), 1);
        let (h, b) = l.unpack(&[2.0]).unwrap();
        assert_eq!(h, vec![1.0, 0.0, 0.0]);
        assert_eq!(b, Penalty::Scalar(2.0));
    }
}
