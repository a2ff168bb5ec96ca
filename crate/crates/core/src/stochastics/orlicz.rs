//! Sample-based estimation of `||W||_psi_q = inf{ t > 0 : E exp(|W|^q / t^q) <= 2 }`
//! for `q in {1, 2}`, tail-bound checks, and the decay of the norm of
//! empirical averages.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{loglog_fit, LogLogFit};
use crate::seed::{self, substream};

/// `q = 1` (sub-exponential) or `q = 2` (sub-Gaussian).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum OrliczOrder {
    SubExponential,
    SubGaussian,
}

impl OrliczOrder {
    pub fn q(self) -> f64 {
        match self {
            OrliczOrder::SubExponential => 1.0,
            OrliczOrder::SubGaussian => 2.0,
        }
    }

    #[inline]
    fn pow(self, v: f64) -> f64 {
        match self {
            OrliczOrder::SubExponential => v,
            OrliczOrder::SubGaussian => v * v,
        }
    }
}

impl TryFrom<u8> for OrliczOrder {
    type Error = Error;
    fn try_from(q: u8) -> Result<Self> {
        match q {
            1 => Ok(OrliczOrder::SubExponential),
            2 => Ok(OrliczOrder::SubGaussian),
            _ => invalid(format!("Orlicz order must be 1 or 2, got {q}")),
        }
    }
}

impl From<OrliczOrder> for u8 {
    fn from(o: OrliczOrder) -> u8 {
        o.q() as u8
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrliczOptions {
    /// Relative width at which the bisection on `t` stops.
    pub rel_tol: f64,
    /// Bootstrap resamples for the half-width; 0 disables it.
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for OrliczOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-4, bootstrap: 16, seed: 0x0051_c2a7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrliczEstimate {
    pub q: OrliczOrder,
    pub norm_estimate: f64,
    pub mc_samples: usize,
    /// 95% bootstrap half-width.
    pub confidence_halfwidth: f64,
    pub warnings: Vec<String>,
}

const RECOMMENDED_SAMPLES: usize = 10_000;

/// `ln( mean_i exp((a_i / t)^q) )`, evaluated with a max shift.
fn log_mean_exp(abs: &[f64], q: OrliczOrder, t: f64) -> f64 {
    let inv = 1.0 / t;
    let top = q.pow(abs.iter().copied().fold(0.0, f64::max) * inv);
    let s: f64 = abs.iter().map(|&a| (q.pow(a * inv) - top).exp()).sum();
    top + s.ln() - (abs.len() as f64).ln()
}

/// Smallest `t` (to relative tolerance) with sample mean of
/// `exp(|W|^q / t^q)` at most 2, by bisection in `ln t`.
fn bisect_norm(abs: &[f64], q: OrliczOrder, rel_tol: f64) -> f64 {
    let max = abs.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let target = std::f64::consts::LN_2;
    let (mut lo, mut hi) = (1e-8 * max, 1e3 * max);
    if log_mean_exp(abs, q, lo) <= target {
        return lo;
    }
    while hi / lo - 1.0 > rel_tol {
        let mid = (lo * hi).sqrt();
        if log_mean_exp(abs, q, mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn orlicz_norm(samples: &[f64], q: OrliczOrder) -> Result<OrliczEstimate> {
    orlicz_norm_with(samples, q, &OrliczOptions::default())
}

pub fn orlicz_norm_with(samples: &[f64], q: OrliczOrder, opts: &OrliczOptions) -> Result<OrliczEstimate> {
    if samples.is_empty() {
        return invalid("Orlicz norm needs at least one sample");
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return invalid("samples must be finite");
    }
    let mut warnings = Vec::new();
    if samples.len() < RECOMMENDED_SAMPLES {
        warnings.push(format!(
            "only {} samples; at least {RECOMMENDED_SAMPLES} recommended",
            samples.len()
        ));
    }
    let abs: Vec<f64> = samples.iter().map(|v| v.abs()).collect();
    let norm = bisect_norm(&abs, q, opts.rel_tol);
    let halfwidth = if norm == 0.0 || opts.bootstrap < 2 {
        0.0
    } else {
        let n = abs.len();
        let boot: Vec<f64> = (0..opts.bootstrap as u64)
            .into_par_iter()
            .map(|b| {
                let mut rng = substream(opts.seed, b);
                let re: Vec<f64> = (0..n).map(|_| abs[rng.random_range(0..n)]).collect();
                bisect_norm(&re, q, opts.rel_tol)
            })
            .collect();
        let mean = boot.iter().sum::<f64>() / boot.len() as f64;
        let var = boot.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (boot.len() - 1) as f64;
        1.96 * var.sqrt()
    };
    Ok(OrliczEstimate { q, norm_estimate: norm, mc_samples: samples.len(), confidence_halfwidth: halfwidth, warnings })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    pub empirical_survival: f64,
    pub bound: f64,
    /// One-sided 99% binomial allowance added to the bound.
    pub allowance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub k: f64,
    pub q: OrliczOrder,
    pub passed: bool,
    pub points: Vec<TailPoint>,
}

const TAIL_GRID: usize = 25;
const Z99: f64 = 2.326_347_874_040_841;

/// Checks `P(|W| > t) <= 2 exp(-(t/K)^q)` at the empirical quantiles of
/// `|W|` between the 50th and 99.9th percentile.
pub fn tail_check(samples: &[f64], k: f64, q: OrliczOrder) -> Result<TailReport> {
    if samples.is_empty() {
        return invalid("tail check needs at least one sample");
    }
    if !(k > 0.0) {
        return invalid("tail constant K must be positive");
    }
    let mut abs: Vec<f64> = samples.iter().map(|v| v.abs()).collect();
    if abs.iter().any(|v| !v.is_finite()) {
        return invalid("samples must be finite");
    }
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    let nf = n as f64;
    let points: Vec<TailPoint> = (0..TAIL_GRID)
        .map(|i| {
            // survival levels 0.5 .. 0.001, log-spaced
            let frac = i as f64 / (TAIL_GRID - 1) as f64;
            let level = 1.0 - 0.5 * (0.002f64).powf(frac);
            let idx = ((level * nf).ceil() as usize).clamp(1, n) - 1;
            let t = abs[idx];
            let above = n - abs.partition_point(|&v| v <= t);
            let empirical = above as f64 / nf;
            let bound = (2.0 * (-q.pow(t / k)).exp()).min(1.0);
            let allowance = Z99 * (bound * (1.0 - bound) / nf).sqrt() + 1.0 / nf;
            TailPoint { t, empirical_survival: empirical, bound, allowance, passed: empirical <= bound + allowance }
        })
        .collect();
    Ok(TailReport { k, q, passed: points.iter().all(|p| p.passed), points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub m: usize,
    pub norm_estimate: f64,
    pub halfwidth: f64,
    /// `K_1 / sqrt(m)` with `K_1` the estimated norm of a single draw.
    pub reference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionTable {
    pub q: OrliczOrder,
    pub single_norm: f64,
    pub rows: Vec<ContractionRow>,
    /// Log-log slope of the estimated norm against `m` (absent when the
    /// estimates are degenerate).
    pub fit: Option<LogLogFit>,
    pub warnings: Vec<String>,
}

/// Estimates `|| (1/m) sum_j W_j ||_psi_q` on a grid of `m` from `trials`
/// independent averages each, and fits the decay exponent.
///
/// Trial `t` at size `m` draws from substream `(derive(seed, [m]), t)`.
pub fn empirical_average_contraction<F>(
    sampler: F,
    q: OrliczOrder,
    m_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ContractionTable>
where
    F: Fn(&mut crate::seed::Rng) -> f64 + Sync,
{
    if m_grid.is_empty() || m_grid.contains(&0) {
        return invalid("m_grid must be non-empty with positive entries");
    }
    if trials < 2 {
        return invalid("need at least two trials per m");
    }
    let opts = OrliczOptions { seed: seed::derive(seed, &[u64::MAX]), ..OrliczOptions::default() };
    let mut warnings = Vec::new();

    let singles: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| sampler(&mut substream(seed::derive(seed, &[0]), t)))
        .collect();
    let nf = singles.len() as f64;
    let mean = singles.iter().sum::<f64>() / nf;
    let sd = (singles.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if mean.abs() > 5.0 * sd / nf.sqrt() {
        warnings.push(format!("sample mean {mean:e} is more than 5 standard errors from zero"));
    }
    let single = orlicz_norm_with(&singles, q, &opts)?;
    warnings.extend(single.warnings.iter().cloned());

    let mut rows = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        let stream_seed = seed::derive(seed, &[m as u64]);
        let averages: Vec<f64> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(stream_seed, t);
                (0..m).map(|_| sampler(&mut rng)).sum::<f64>() / m as f64
            })
            .collect();
        let est = orlicz_norm_with(&averages, q, &opts)?;
        rows.push(ContractionRow {
            m,
            norm_estimate: est.norm_estimate,
            halfwidth: est.confidence_halfwidth,
            reference: single.norm_estimate / (m as f64).sqrt(),
        });
    }

    let positive = rows.iter().all(|r| r.norm_estimate > 0.0);
    let fit = if positive && rows.len() >= 3 {
        let ms: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
        let ks: Vec<f64> = rows.iter().map(|r| r.norm_estimate).collect();
        Some(loglog_fit(&ms, &ks, None)?)
    } else {
        None
    };
    Ok(ContractionTable { q, single_norm: single.norm_estimate, rows, fit, warnings })
}
