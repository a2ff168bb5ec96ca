//! Straight-line fits on log-log data.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// 95% confidence interval for the slope.
    pub slope_ci: [f64; 2],
    pub points: usize,
}

impl LogLogFit {
    pub fn contains(&self, value: f64) -> bool {
        self.slope_ci[0] <= value && value <= self.slope_ci[1]
    }
}

/// Fits `ln y = intercept + slope ln x`.
///
/// With `y_stderr` present each point is weighted by the inverse squared
/// standard error of `ln y` (delta method, `se / y`). The slope standard error
/// is scaled by the reduced chi-square of the residuals and the interval uses
/// Student-t quantiles with `n - 2` degrees of freedom.
pub fn loglog_fit(xs: &[f64], ys: &[f64], y_stderr: Option<&[f64]>) -> Result<LogLogFit> {
    if xs.len() != ys.len() || y_stderr.is_some_and(|s| s.len() != xs.len()) {
        return invalid("log-log fit inputs differ in length");
    }
    if xs.len() < 3 {
        return invalid("log-log fit needs at least 3 points");
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return invalid("log-log fit needs positive finite data");
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let w: Vec<f64> = match y_stderr {
        Some(se) => se
            .iter()
            .zip(ys)
            .map(|(&s, &y)| {
                let rel = s / y;
                if rel > 0.0 && rel.is_finite() {
                    1.0 / (rel * rel)
                } else {
                    1.0
                }
            })
            .collect(),
        None => vec![1.0; xs.len()],
    };
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&lx).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(&ly).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&lx).map(|(w, x)| w * (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return invalid("log-log fit needs at least two distinct abscissae");
    }
    let sxy: f64 = w.iter().zip(lx.iter().zip(&ly)).map(|(w, (x, y))| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = (xs.len() - 2) as f64;
    let chi2: f64 = w
        .iter()
        .zip(lx.iter().zip(&ly))
        .map(|(w, (x, y))| w * (y - intercept - slope * x).powi(2))
        .sum();
    let slope_stderr = (chi2 / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    Ok(LogLogFit {
        slope,
        intercept,
        slope_stderr,
        slope_ci: [slope - t * slope_stderr, slope + t * slope_stderr],
        points: xs.len(),
    })
}
