//! Joint law of `(x, y)` for `y = A x + e`, seeded training sets, and
//! Orlicz-norm concentration diagnostics.

mod orlicz;

pub use orlicz::{
    empirical_average_contraction, orlicz_norm, orlicz_norm_with, tail_check, ContractionRow, ContractionTable,
    OrliczEstimate, OrliczOptions, OrliczOrder, TailPoint, TailReport,
};

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::linalg;
use crate::operators::{ForwardOperator, GaussianSpec};
use crate::scalar::Scalar;
use crate::seed::substream;

/// Uniform law on the ball `{ |x - center| <= radius }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct BoundedSpec<T: Scalar> {
    pub dim: usize,
    pub radius: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<T>>,
}

impl<T: Scalar> BoundedSpec<T> {
    pub fn ball(dim: usize, radius: T) -> Result<Self> {
        let s = Self { dim, radius, center: None };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || !(self.radius >= T::zero()) || !self.radius.is_finite() {
            return invalid("bounded law needs positive dimension and finite nonnegative radius");
        }
        if let Some(c) = &self.center {
            check_len(self.dim, c.len())?;
        }
        Ok(())
    }

    pub fn mean(&self) -> Vec<T> {
        self.center.clone().unwrap_or_else(|| vec![T::zero(); self.dim])
    }

    /// `E|x - mean|^2 = n R^2 / (n + 2)`.
    pub fn trace(&self) -> T {
        let n = T::from_usize_lossy(self.dim);
        n * self.radius * self.radius / (n + T::lit(2.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let g: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let u: f64 = rng.random::<f64>();
        let r = self.radius.as_f64() * u.powf(1.0 / self.dim as f64);
        let dir: Vec<T> = g.iter().map(|v| T::lit(v / gn * r)).collect();
        linalg::add(&dir, &self.mean())
    }
}

/// Law of a single component of the model (prior on `x` or noise `e`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub enum Law<T: Scalar> {
    Gaussian(GaussianSpec<T>),
    Bounded(BoundedSpec<T>),
}

impl<T: Scalar> Law<T> {
    pub fn dim(&self) -> usize {
        match self {
            Law::Gaussian(g) => g.dim(),
            Law::Bounded(b) => b.dim,
        }
    }

    pub fn mean(&self) -> Vec<T> {
        match self {
            Law::Gaussian(g) => g.mean().to_vec(),
            Law::Bounded(b) => b.mean(),
        }
    }

    /// Trace of the covariance.
    pub fn trace(&self) -> T {
        match self {
            Law::Gaussian(g) => g.trace(),
            Law::Bounded(b) => b.trace(),
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianSpec<T>> {
        match self {
            Law::Gaussian(g) => Some(g),
            Law::Bounded(_) => None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, Law::Bounded(_))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        match self {
            Law::Gaussian(g) => g.sample(rng),
            Law::Bounded(b) => b.sample(rng),
        }
    }
}

/// Joint law of `(x, y)`: push-forward of `prior x noise` through
/// `(x, e) -> (x, A x + e)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionJson<T>", into = "DistributionJson<T>", bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct ProblemDistribution<T: Scalar> {
    forward: ForwardOperator<T>,
    prior: Law<T>,
    noise: Law<T>,
    delta: T,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
struct DistributionJson<T: Scalar> {
    forward: ForwardOperator<T>,
    prior: Law<T>,
    noise: Law<T>,
    delta: T,
}

impl<T: Scalar> TryFrom<DistributionJson<T>> for ProblemDistribution<T> {
    type Error = crate::Error;
    fn try_from(j: DistributionJson<T>) -> Result<Self> {
        Self::new(j.forward, j.prior, j.noise, j.delta)
    }
}

impl<T: Scalar> From<ProblemDistribution<T>> for DistributionJson<T> {
    fn from(d: ProblemDistribution<T>) -> Self {
        DistributionJson { forward: d.forward, prior: d.prior, noise: d.noise, delta: d.delta }
    }
}

impl<T: Scalar> ProblemDistribution<T> {
    /// Validates dimensions, zero noise mean and `tr(S_e) <= delta^2`.
    pub fn new(forward: ForwardOperator<T>, prior: Law<T>, noise: Law<T>, delta: T) -> Result<Self> {
        check_len(forward.n_x(), prior.dim())?;
        check_len(forward.n_y(), noise.dim())?;
        if noise.mean().iter().any(|m| *m != T::zero()) {
            return invalid("noise must be zero-mean");
        }
        if !(delta >= T::zero()) {
            return invalid("noise level delta must be nonnegative");
        }
        let tr = noise.trace();
        if tr > delta * delta * (T::one() + T::lit(1e-12)) {
            return invalid(format!("noise trace {tr} exceeds delta^2 = {}", delta * delta));
        }
        Ok(Self { forward, prior, noise, delta })
    }

    /// Gaussian prior and noise with the smallest admissible `delta`.
    pub fn gaussian(forward: ForwardOperator<T>, prior: GaussianSpec<T>, noise: GaussianSpec<T>) -> Result<Self> {
        let delta = noise.trace().sqrt();
        Self::new(forward, Law::Gaussian(prior), Law::Gaussian(noise), delta)
    }

    pub fn forward(&self) -> &ForwardOperator<T> {
        &self.forward
    }

    pub fn prior(&self) -> &Law<T> {
        &self.prior
    }

    pub fn noise(&self) -> &Law<T> {
        &self.noise
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn is_gaussian(&self) -> bool {
        self.prior.as_gaussian().is_some() && self.noise.as_gaussian().is_some()
    }

    /// One labeled couple `(x, A x + e)`.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<T>, Vec<T>) {
        let x = self.prior.sample(rng);
        let e = self.noise.sample(rng);
        let y = linalg::add(&self.forward.apply(&x).expect("prior dim checked"), &e);
        (x, y)
    }
}

/// Labeled couples `(x_j, y_j)`, `j = 0..m`, with the seed that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet<T> {
    pairs: Vec<(Vec<T>, Vec<T>)>,
    seed: u64,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn from_pairs(pairs: Vec<(Vec<T>, Vec<T>)>, seed: u64) -> Result<Self> {
        if pairs.is_empty() {
            return invalid("training set must contain at least one pair");
        }
        Ok(Self { pairs, seed })
    }

    pub fn m(&self) -> usize {
        self.pairs.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pairs(&self) -> &[(Vec<T>, Vec<T>)] {
        &self.pairs
    }

    /// `e_j = y_j - A x_j`
    pub fn noise_draw(&self, j: usize, forward: &ForwardOperator<T>) -> Result<Vec<T>> {
        let (x, y) = &self.pairs[j];
        Ok(linalg::sub(y, &forward.apply(x)?))
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.extend(other.pairs.iter().cloned());
        Self { pairs, seed: self.seed }
    }

    /// Pairs reordered by `order` (a permutation of `0..m`).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        check_len(self.m(), order.len())?;
        let mut seen = vec![false; self.m()];
        for &i in order {
            if i >= self.m() || std::mem::replace(&mut seen[i], true) {
                return invalid("order is not a permutation");
            }
        }
        Ok(Self { pairs: order.iter().map(|&i| self.pairs[i].clone()).collect(), seed: self.seed })
    }

    /// CSV dump with header `j,x_0,..,x_{n-1},y_0,..,y_{k-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let (nx, ny) = (self.pairs[0].0.len(), self.pairs[0].1.len());
        let mut header = vec!["j".to_string()];
        header.extend((0..nx).map(|i| format!("x_{i}")));
        header.extend((0..ny).map(|i| format!("y_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (j, (x, y)) in self.pairs.iter().enumerate() {
            write!(w, "{j}")?;
            for v in x.iter().chain(y) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Draws `m` i.i.d. labeled couples; pair `j` uses substream `(seed, j)`.
pub fn draw_training_set<T: Scalar>(dist: &ProblemDistribution<T>, m: usize, seed: u64) -> Result<TrainingSet<T>> {
    if m == 0 {
        return invalid("sample size m must be at least 1");
    }
    let pairs = (0..m as u64)
        .into_par_iter()
        .map(|j| dist.sample_pair(&mut substream(seed, j)))
        .collect();
    TrainingSet::from_pairs(pairs, seed)
}
