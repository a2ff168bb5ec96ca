//! Quadratic loss, empirical and expected risk, empirical risk minimization
//! over a parameter class, and the four-way error decomposition.
//!
//! Everything here runs in `f64`. Sums over samples are taken in fixed-size
//! chunks combined in index order, so results do not depend on the number of
//! worker threads.

mod erm;

pub use erm::{erm_solve, ErmOptions, ErmResult, StartOutcome};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::hypotheses::{Family, ParamClass, Reconstructor};
use crate::linalg::dist;
use crate::operators::mmse_affine;
use crate::seed::{derive, substream};
use crate::stochastics::{draw_training_set, ProblemDistribution, TrainingSet};

/// Samples per Monte Carlo chunk; chunk `c` draws from substream `(seed, c)`.
pub const MC_CHUNK: usize = 4096;
/// Pairs per chunk in empirical sums.
pub const SUM_CHUNK: usize = 1024;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// `0.5 ||R_theta(y) - x||^2`.
pub fn loss(family: &dyn Family<f64>, theta: &[f64], x: &[f64], y: &[f64]) -> Result<f64> {
    let r = family.bind(theta)?;
    pair_loss(&*r, x, y)
}

fn pair_loss(r: &dyn Reconstructor<f64>, x: &[f64], y: &[f64]) -> Result<f64> {
    let p = r.reconstruct(y)?;
    check_len(x.len(), p.len())?;
    let d = dist(&p, x);
    Ok(0.5 * d * d)
}

pub(crate) fn loss_sum(r: &dyn Reconstructor<f64>, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let parts = pairs
        .par_chunks(SUM_CHUNK)
        .map(|c| c.iter().map(|(x, y)| pair_loss(r, x, y)).sum::<Result<f64>>())
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.into_iter().sum())
}

/// `(1/m) sum_j 0.5 ||R_theta(y_j) - x_j||^2`.
pub fn empirical_risk(ts: &TrainingSet<f64>, theta: &[f64], family: &dyn Family<f64>) -> Result<f64> {
    let r = family.bind(theta)?;
    Ok(loss_sum(&*r, ts.pairs())? / ts.m() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// 95% normal-approximation half-width.
    pub halfwidth: f64,
    pub n: usize,
}

/// Sample means and covariance of the losses of several maps evaluated on
/// the same Monte Carlo draws.
#[derive(Clone, Debug, PartialEq)]
pub struct McMoments {
    pub n: usize,
    pub means: Vec<f64>,
    /// Row-major `k x k` sample covariance.
    pub cov: Vec<f64>,
}

impl McMoments {
    fn k(&self) -> usize {
        self.means.len()
    }

    pub fn estimate(&self, i: usize) -> McEstimate {
        let var = self.cov[i * self.k() + i].max(0.0);
        McEstimate { estimate: self.means[i], halfwidth: Z95 * (var / self.n as f64).sqrt(), n: self.n }
    }

    /// `L_i - L_j` with the half-width of the paired difference.
    pub fn difference(&self, i: usize, j: usize) -> McEstimate {
        let k = self.k();
        let var = (self.cov[i * k + i] + self.cov[j * k + j] - 2.0 * self.cov[i * k + j]).max(0.0);
        McEstimate {
            estimate: self.means[i] - self.means[j],
            halfwidth: Z95 * (var / self.n as f64).sqrt(),
            n: self.n,
        }
    }
}

struct Accumulator {
    n: f64,
    mean: Vec<f64>,
    /// Co-moment sums `sum (a_i - mean_i)(a_j - mean_j)`.
    co: Vec<f64>,
}

impl Accumulator {
    fn new(k: usize) -> Self {
        Self { n: 0.0, mean: vec![0.0; k], co: vec![0.0; k * k] }
    }

    fn push(&mut self, v: &[f64]) {
        let k = v.len();
        self.n += 1.0;
        let delta: Vec<f64> = v.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / self.n;
        }
        for i in 0..k {
            for j in 0..k {
                self.co[i * k + j] += delta[i] * (v[j] - self.mean[j]);
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        if other.n == 0.0 {
            return self;
        }
        let k = self.mean.len();
        let n = self.n + other.n;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..k {
            for j in 0..k {
                self.co[i * k + j] += other.co[i * k + j] + delta[i] * delta[j] * self.n * other.n / n;
            }
        }
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * other.n / n;
        }
        self.n = n;
        self
    }
}

/// Losses of `maps` on `n_mc` shared draws from `dist`.
pub fn loss_moments_mc(
    dist: &ProblemDistribution<f64>,
    maps: &[&dyn Reconstructor<f64>],
    n_mc: usize,
    seed: u64,
) -> Result<McMoments> {
    if n_mc < 2 {
        return invalid("Monte Carlo sample size must be at least 2");
    }
    if maps.is_empty() {
        return invalid("no maps to evaluate");
    }
    let k = maps.len();
    let chunks = n_mc.div_ceil(MC_CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let len = MC_CHUNK.min(n_mc - c * MC_CHUNK);
            let mut acc = Accumulator::new(k);
            let mut v = vec![0.0; k];
            for _ in 0..len {
                let (x, y) = dist.sample_pair(&mut rng);
                for (slot, map) in v.iter_mut().zip(maps) {
                    *slot = pair_loss(*map, &x, &y)?;
                }
                acc.push(&v);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<Accumulator>>>()?;
    let acc = parts.into_iter().fold(Accumulator::new(k), Accumulator::merge);
    let denom = acc.n - 1.0;
    Ok(McMoments { n: n_mc, means: acc.mean, cov: acc.co.iter().map(|c| c / denom).collect() })
}

/// Monte Carlo estimate of `E[0.5 ||R_theta(y) - x||^2]`.
pub fn expected_loss_mc(
    dist: &ProblemDistribution<f64>,
    theta: &[f64],
    family: &dyn Family<f64>,
    n_mc: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_mc < 100 {
        return invalid("expected_loss_mc needs n_mc >= 100");
    }
    let r = family.bind(theta)?;
    Ok(loss_moments_mc(dist, &[&*r], n_mc, seed)?.estimate(0))
}

/// Expected losses of several parameters on shared draws.
pub fn expected_losses_mc(
    dist: &ProblemDistribution<f64>,
    thetas: &[&[f64]],
    family: &dyn Family<f64>,
    n_mc: usize,
    seed: u64,
) -> Result<McMoments> {
    let bound = thetas.iter().map(|t| family.bind(t)).collect::<Result<Vec<_>>>()?;
    let maps: Vec<&dyn Reconstructor<f64>> = bound.iter().map(|b| &**b).collect();
    loss_moments_mc(dist, &maps, n_mc, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPair {
    pub theta_hat: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub erm_residual: f64,
    pub proxy_sample_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyTarget {
    pub theta_star: Vec<f64>,
    pub loss: McEstimate,
    pub erm_residual: f64,
    pub converged: bool,
    /// Minimizer obtained from an independent proxy sample.
    pub alternate_theta: Vec<f64>,
    /// `L(theta_star) - L(alternate_theta)` on shared draws.
    pub shift: f64,
    pub proxy_m: usize,
}

/// ERM on a sample of size `proxy_m`, standing in for the minimizer of the
/// expected loss. A second proxy sample is drawn; if the expected losses of
/// the two minimizers differ by the half-width of `L(theta_star)` or more, the
/// proxy is rejected as unstable.
pub fn optimal_target_proxy(
    class: &ParamClass<f64>,
    family: &dyn Family<f64>,
    dist: &ProblemDistribution<f64>,
    proxy_m: usize,
    n_mc: usize,
    seed: u64,
    opts: &ErmOptions,
) -> Result<ProxyTarget> {
    if class.is_singleton() {
        let theta = class.center();
        let loss = expected_loss_mc(dist, &theta, family, n_mc, derive(seed, &[3]))?;
        return Ok(ProxyTarget {
            alternate_theta: theta.clone(),
            theta_star: theta,
            loss,
            erm_residual: 0.0,
            converged: true,
            shift: 0.0,
            proxy_m,
        });
    }
    let fit = |k: u64| -> Result<ErmResult> {
        let ts = draw_training_set(dist, proxy_m, derive(seed, &[k]))?;
        erm_solve(class, family, &ts, opts)
    };
    let first = fit(1)?;
    let second = fit(2)?;
    let mom = expected_losses_mc(dist, &[&first.theta_hat, &second.theta_hat], family, n_mc, derive(seed, &[3]))?;
    let loss = mom.estimate(0);
    let shift = mom.difference(0, 1).estimate;
    if shift.abs() >= loss.halfwidth {
        return Err(Error::UnstableProxy { shift, halfwidth: loss.halfwidth });
    }
    Ok(ProxyTarget {
        theta_star: first.theta_hat,
        loss,
        erm_residual: first.residual,
        converged: first.converged,
        alternate_theta: second.theta_hat,
        shift,
        proxy_m,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionHalfwidths {
    pub optimization: f64,
    pub sample: f64,
    pub approximation: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    /// `L(theta_tilde) - L(theta_hat)`
    pub optimization: f64,
    /// `L(theta_hat) - L(theta_star)`
    pub sample: f64,
    /// `L(theta_star) - L(R_rho)`
    pub approximation: f64,
    /// `L(R_rho)`; 0 when it could not be computed.
    pub irreducible: f64,
    /// `L(theta_tilde)`
    pub total: f64,
    pub halfwidths: DecompositionHalfwidths,
    pub irreducible_computed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Splits `L(theta_tilde)` into optimization, sample, approximation and
/// irreducible error, with all expected losses evaluated on shared draws.
///
/// The irreducible error is the closed-form MMSE loss when prior and noise
/// are Gaussian; otherwise it is set to its lower bound 0, which makes the
/// reported approximation error an upper bound.
pub fn decompose(
    theta_tilde: &[f64],
    targets: &TargetPair,
    dist: &ProblemDistribution<f64>,
    family: &dyn Family<f64>,
    class: &ParamClass<f64>,
    n_mc: usize,
    seed: u64,
) -> Result<ErrorDecomposition> {
    for (name, t) in [("theta_tilde", theta_tilde), ("theta_hat", &targets.theta_hat), ("theta_star", &targets.theta_star)] {
        if !class.contains(t) {
            return invalid(format!("{name} lies outside the parameter class"));
        }
    }
    let bound = [theta_tilde, &targets.theta_hat[..], &targets.theta_star[..]]
        .iter()
        .map(|t| family.bind(t))
        .collect::<Result<Vec<_>>>()?;
    let mut maps: Vec<&dyn Reconstructor<f64>> = bound.iter().map(|b| &**b).collect();
    let mut notes = Vec::new();
    let bayes = match (dist.prior().as_gaussian(), dist.noise().as_gaussian()) {
        (Some(p), Some(n)) => Some(mmse_affine(dist.forward(), p, n)?),
        _ => {
            notes.push("irreducible error not computed: prior or noise is not Gaussian; reported as its lower bound 0".into());
            None
        }
    };
    if let Some(b) = &bayes {
        maps.push(&b.map);
    }
    let mom = loss_moments_mc(dist, &maps, n_mc, seed)?;
    let optimization = mom.difference(0, 1);
    let sample = mom.difference(1, 2);
    let total = mom.estimate(0);
    let (approximation, irreducible) = match &bayes {
        Some(b) => (mom.difference(2, 3), b.irreducible_error),
        None => (mom.estimate(2), 0.0),
    };
    Ok(ErrorDecomposition {
        optimization: optimization.estimate,
        sample: sample.estimate,
        approximation: approximation.estimate,
        irreducible,
        total: total.estimate,
        halfwidths: DecompositionHalfwidths {
            optimization: optimization.halfwidth,
            sample: sample.halfwidth,
            approximation: approximation.halfwidth,
            total: total.halfwidth,
        },
        irreducible_computed: bayes.is_some(),
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Representativeness {
    /// `max_k |L_hat(theta_k) - L(theta_k)|`, a lower bound for the supremum
    /// over the class.
    pub value: f64,
    pub argmax: usize,
    pub gaps: Vec<f64>,
    /// Largest Monte Carlo half-width among the grid points.
    pub halfwidth: f64,
}

pub fn representativeness(
    ts: &TrainingSet<f64>,
    class: &ParamClass<f64>,
    family: &dyn Family<f64>,
    grid: &[Vec<f64>],
    dist: &ProblemDistribution<f64>,
    n_mc: usize,
    seed: u64,
) -> Result<Representativeness> {
    if grid.is_empty() {
        return invalid("representativeness grid is empty");
    }
    if let Some(k) = grid.iter().position(|t| !class.contains(t)) {
        return invalid(format!("grid point {k} lies outside the parameter class"));
    }
    let refs: Vec<&[f64]> = grid.iter().map(Vec::as_slice).collect();
    let mom = expected_losses_mc(dist, &refs, family, n_mc, seed)?;
    let mut gaps = Vec::with_capacity(grid.len());
    let mut halfwidth: f64 = 0.0;
    for (k, theta) in grid.iter().enumerate() {
        let e = mom.estimate(k);
        gaps.push((empirical_risk(ts, theta, family)? - e.estimate).abs());
        halfwidth = halfwidth.max(e.halfwidth);
    }
    let (argmax, value) = gaps
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(Representativeness { value, argmax, gaps, halfwidth })
}
