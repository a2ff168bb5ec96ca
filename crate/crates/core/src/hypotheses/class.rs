use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::CoveringModel;
use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{dist, norm};
use crate::scalar::Scalar;

/// A compact parameter set `Theta` in flat parameter space.
///
/// Ball and box classes use the Euclidean metric. The Sobolev-type ball is
/// `{ theta in R^n : sum_k k^(2s) theta_k^2 <= radius^2 }`, measured in the
/// ambient Euclidean norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "ClassJson<T>", into = "ClassJson<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub enum ParamClass<T: Scalar> {
    EuclideanBall { center: Vec<T>, radius: T },
    Box { lower: Vec<T>, upper: Vec<T> },
    SobolevBall { dimension: usize, smoothness: T, radius: T },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ClassJson<T: Scalar> {
    EuclideanBall {
        dimension: usize,
        radius: T,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<T>>,
    },
    Box {
        lower: Vec<T>,
        upper: Vec<T>,
    },
    SobolevBall {
        dimension: usize,
        smoothness: T,
        #[serde(default = "one")]
        radius: T,
    },
}

fn one<T: Scalar>() -> T {
    T::one()
}

impl<T: Scalar> TryFrom<ClassJson<T>> for ParamClass<T> {
    type Error = Error;
    fn try_from(j: ClassJson<T>) -> Result<Self> {
        match j {
            ClassJson::EuclideanBall { dimension, radius, center } => {
                let center = center.unwrap_or_else(|| vec![T::zero(); dimension]);
                check_len(dimension, center.len())?;
                Self::ball(center, radius)
            }
            ClassJson::Box { lower, upper } => Self::boxed(lower, upper),
            ClassJson::SobolevBall { dimension, smoothness, radius } => Self::sobolev(dimension, smoothness, radius),
        }
    }
}

impl<T: Scalar> From<ParamClass<T>> for ClassJson<T> {
    fn from(c: ParamClass<T>) -> Self {
        match c {
            ParamClass::EuclideanBall { center, radius } => {
                ClassJson::EuclideanBall { dimension: center.len(), radius, center: Some(center) }
            }
            ParamClass::Box { lower, upper } => ClassJson::Box { lower, upper },
            ParamClass::SobolevBall { dimension, smoothness, radius } => {
                ClassJson::SobolevBall { dimension, smoothness, radius }
            }
        }
    }
}

impl<T: Scalar> ParamClass<T> {
    pub fn ball(center: Vec<T>, radius: T) -> Result<Self> {
        if center.is_empty() {
            return invalid("parameter dimension must be positive");
        }
        if !(radius >= T::zero()) || !radius.is_finite() {
            return invalid("ball radius must be finite and non-negative");
        }
        Ok(ParamClass::EuclideanBall { center, radius })
    }

    pub fn singleton(theta: Vec<T>) -> Result<Self> {
        Self::ball(theta, T::zero())
    }

    pub fn boxed(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        check_len(lower.len(), upper.len())?;
        if lower.is_empty() {
            return invalid("parameter dimension must be positive");
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return invalid("box needs finite bounds with lower <= upper");
        }
        Ok(ParamClass::Box { lower, upper })
    }

    pub fn sobolev(dimension: usize, smoothness: T, radius: T) -> Result<Self> {
        if dimension == 0 {
            return invalid("parameter dimension must be positive");
        }
        if !(smoothness > T::zero()) || !(radius > T::zero()) {
            return invalid("smoothness and radius must be positive");
        }
        Ok(ParamClass::SobolevBall { dimension, smoothness, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            ParamClass::EuclideanBall { center, .. } => center.len(),
            ParamClass::Box { lower, .. } => lower.len(),
            ParamClass::SobolevBall { dimension, .. } => *dimension,
        }
    }

    pub fn center(&self) -> Vec<T> {
        match self {
            ParamClass::EuclideanBall { center, .. } => center.clone(),
            ParamClass::Box { lower, upper } => lower.iter().zip(upper).map(|(&l, &u)| T::lit(0.5) * (l + u)).collect(),
            ParamClass::SobolevBall { dimension, .. } => vec![T::zero(); *dimension],
        }
    }

    pub fn is_singleton(&self) -> bool {
        match self {
            ParamClass::EuclideanBall { radius, .. } => *radius == T::zero(),
            ParamClass::Box { lower, upper } => lower == upper,
            ParamClass::SobolevBall { .. } => false,
        }
    }

    pub fn diameter(&self) -> T {
        match self {
            ParamClass::EuclideanBall { radius, .. } => T::lit(2.0) * *radius,
            ParamClass::Box { lower, upper } => dist(lower, upper),
            ParamClass::SobolevBall { radius, .. } => T::lit(2.0) * *radius,
        }
    }

    /// `max ||theta||` over the class.
    pub fn max_norm(&self) -> T {
        match self {
            ParamClass::EuclideanBall { center, radius } => norm(center) + *radius,
            ParamClass::Box { lower, upper } => {
                let far: Vec<T> = lower.iter().zip(upper).map(|(l, u)| l.abs().max(u.abs())).collect();
                norm(&far)
            }
            ParamClass::SobolevBall { radius, .. } => *radius,
        }
    }

    fn sobolev_weights(dimension: usize, smoothness: T) -> impl Iterator<Item = T> {
        (1..=dimension).map(move |k| T::from_usize_lossy(k).powf(T::lit(2.0) * smoothness))
    }

    pub fn contains(&self, theta: &[T]) -> bool {
        if theta.len() != self.dim() {
            return false;
        }
        let slack = T::lit(1e-12);
        match self {
            ParamClass::EuclideanBall { center, radius } => dist(theta, center) <= *radius * (T::one() + slack) + slack,
            ParamClass::Box { lower, upper } => {
                theta.iter().zip(lower.iter().zip(upper)).all(|(&t, (&l, &u))| t >= l - slack && t <= u + slack)
            }
            ParamClass::SobolevBall { dimension, smoothness, radius } => {
                let e: T = Self::sobolev_weights(*dimension, *smoothness).zip(theta).map(|(w, &t)| w * t * t).sum();
                e <= *radius * *radius * (T::one() + slack)
            }
        }
    }

    /// Nearest point of the class (for the Sobolev ball, nearest in the
    /// Euclidean norm, found by bisection on the Lagrange multiplier).
    pub fn project(&self, theta: &[T]) -> Result<Vec<T>> {
        check_len(self.dim(), theta.len())?;
        if self.contains(theta) {
            return Ok(theta.to_vec());
        }
        Ok(match self {
            ParamClass::EuclideanBall { center, radius } => {
                let d = dist(theta, center);
                let s = *radius / d;
                center.iter().zip(theta).map(|(&c, &t)| c + s * (t - c)).collect()
            }
            ParamClass::Box { lower, upper } => {
                theta.iter().zip(lower.iter().zip(upper)).map(|(&t, (&l, &u))| t.max(l).min(u)).collect()
            }
            ParamClass::SobolevBall { dimension, smoothness, radius } => {
                let w: Vec<T> = Self::sobolev_weights(*dimension, *smoothness).collect();
                let r2 = *radius * *radius;
                let energy = |lam: T| -> T {
                    w.iter()
                        .zip(theta)
                        .map(|(&wk, &t)| {
                            let v = t / (T::one() + lam * wk);
                            wk * v * v
                        })
                        .sum()
                };
                let (mut lo, mut hi) = (T::zero(), T::one());
                while energy(hi) > r2 {
                    lo = hi;
                    hi *= T::lit(2.0);
                }
                for _ in 0..200 {
                    let mid = T::lit(0.5) * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if energy(mid) > r2 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                w.iter().zip(theta).map(|(&wk, &t)| t / (T::one() + hi * wk)).collect()
            }
        })
    }

    /// Draws a point of the class.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let unit_ball = |rng: &mut R, d: usize| -> Vec<T> {
            let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let r = rng.random::<f64>().powf(1.0 / d as f64);
            g.iter().map(|v| T::lit(v / n * r)).collect()
        };
        match self {
            ParamClass::EuclideanBall { center, radius } => {
                let u = unit_ball(rng, center.len());
                center.iter().zip(u).map(|(&c, v)| c + *radius * v).collect()
            }
            ParamClass::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| l + (u - l) * T::lit(rng.random::<f64>()))
                .collect(),
            ParamClass::SobolevBall { dimension, smoothness, radius } => {
                let u = unit_ball(rng, *dimension);
                Self::sobolev_weights(*dimension, *smoothness).zip(u).map(|(w, v)| *radius * v / w.sqrt()).collect()
            }
        }
    }

    /// Upper model for `log N(Theta, r)`.
    pub fn covering_model(&self) -> CoveringModel<T> {
        if self.is_singleton() {
            return CoveringModel::Constant { log_n: T::zero() };
        }
        match self {
            ParamClass::EuclideanBall { center, radius } => CoveringModel::EuclideanBall { d: center.len(), radius: *radius },
            ParamClass::Box { .. } => {
                CoveringModel::EuclideanBall { d: self.dim(), radius: T::lit(0.5) * self.diameter() }
            }
            ParamClass::SobolevBall { smoothness, .. } => CoveringModel::EntropyDecay { s: *smoothness, c: T::one() },
        }
    }
}
