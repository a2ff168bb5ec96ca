//! Predicted learning-rate exponents and finite-class concentration.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::stochastics::OrliczOrder;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassKind {
    /// Compact subset of `R^d`.
    FiniteDim { d: usize },
    /// Class with `log N(r) ~ r^(-1/s)`.
    InfiniteDim { s: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Covering,
    Chaining,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    /// The method giving the faster rate (chaining on ties).
    pub method: Method,
    /// Exponent of `m` in the expected sample error for `method`.
    pub exponent: f64,
    pub covering_exponent: f64,
    pub chaining_exponent: f64,
    /// Extra polynomial-in-`log m` factor of the covering rate (finite-dim only).
    pub covering_log_power: f64,
    pub regime: String,
    /// `(1 - alpha) / (alpha^2 q)`: covering is faster for `s` below it.
    pub crossover: Option<f64>,
}

pub fn predicted_exponent(kind: ClassKind, alpha: f64, q: OrliczOrder) -> Result<RatePrediction> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return invalid("alpha must lie in (0, 1]");
    }
    let qf = q.q();
    match kind {
        ClassKind::FiniteDim { d } => {
            if d == 0 {
                return invalid("dimension must be positive");
            }
            Ok(RatePrediction {
                method: Method::Chaining,
                exponent: -0.5,
                covering_exponent: -0.5,
                chaining_exponent: -0.5,
                covering_log_power: 1.0 / qf,
                regime: format!(
                    "finite-dimensional (d = {d}): covering gives log(m)^(1/q) d^(1/q) m^-1/2, chaining gives m^-1/2 (d log d)^(1/q)"
                ),
                crossover: None,
            })
        }
        ClassKind::InfiniteDim { s } => {
            if !(s > 0.0) || !s.is_finite() {
                return invalid("smoothness s must be positive");
            }
            let asq = alpha * s * qf;
            let covering = -0.5 * (1.0 - 1.0 / (1.0 + asq));
            let boundary = 1.0 / (alpha * qf);
            let (chaining, mut regime) = if s <= boundary {
                (
                    -0.5 * alpha * asq,
                    format!("sub-saturation: s = {s} <= 1/(alpha q) = {boundary}, chaining exponent -alpha^2 s q / 2"),
                )
            } else {
                (-0.5, format!("saturated: s = {s} > 1/(alpha q) = {boundary}, chaining exponent -1/2"))
            };
            let crossover = (1.0 - alpha) / (alpha * alpha * qf);
            let method = if covering < chaining { Method::Covering } else { Method::Chaining };
            if method == Method::Covering {
                regime.push_str(&format!("; covering is faster since s < (1 - alpha)/(alpha^2 q) = {crossover}"));
            }
            Ok(RatePrediction {
                method,
                exponent: covering.min(chaining),
                covering_exponent: covering,
                chaining_exponent: chaining,
                covering_log_power: 0.0,
                regime,
                crossover: Some(crossover),
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingTail {
    /// `2 exp(-2 m rho^2 / K^2)`.
    pub standard: f64,
    /// `2 exp(-2 rho^2 / (m K^2))`, the form with `m` in the denominator.
    pub printed: f64,
}

/// Tail probability of a mean of `m` variables with range `K` deviating by `rho`.
pub fn hoeffding_tail(rho: f64, m: usize, k: f64) -> Result<HoeffdingTail> {
    if !(rho > 0.0) || m == 0 || !(k > 0.0) {
        return invalid("hoeffding_tail needs rho > 0, m >= 1, K > 0");
    }
    let mf = m as f64;
    let base = 2.0 * rho * rho / (k * k);
    Ok(HoeffdingTail { standard: 2.0 * (-base * mf).exp(), printed: 2.0 * (-base / mf).exp() })
}

/// Sample size `c log(|Theta| / eta) / rho^2` for a finite class.
pub fn pac_sample_size(class_size: usize, eta: f64, rho: f64, c: f64) -> Result<f64> {
    if class_size == 0 || !(eta > 0.0 && eta < 1.0) || !(rho > 0.0) || !(c > 0.0) {
        return invalid("pac_sample_size needs |Theta| >= 1, eta in (0, 1), rho > 0, c > 0");
    }
    Ok(c * (class_size as f64 / eta).ln() / (rho * rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use OrliczOrder::{SubExponential, SubGaussian};

    #[test]
    fn finite_dim_is_half() {
        for d in [1, 5, 100] {
            for q in [SubExponential, SubGaussian] {
                let p = predicted_exponent(ClassKind::FiniteDim { d }, 0.7, q).unwrap();
                assert_eq!(p.chaining_exponent, -0.5);
                assert_eq!(p.method, Method::Chaining);
            }
        }
    }

    #[test]
    fn infinite_dim_examples() {
        let p = predicted_exponent(ClassKind::InfiniteDim { s: 1.0 }, 1.0, SubExponential).unwrap();
        assert_eq!(p.chaining_exponent, -0.5);
        assert!(p.regime.starts_with("sub-saturation"));
        let p = predicted_exponent(ClassKind::InfiniteDim { s: 2.0 }, 1.0, SubExponential).unwrap();
        assert_eq!(p.chaining_exponent, -0.5);
        assert!(p.regime.starts_with("saturated"));
        let p = predicted_exponent(ClassKind::InfiniteDim { s: 0.25 }, 1.0, SubGaussian).unwrap();
        assert!((p.chaining_exponent + 0.25).abs() < 1e-15);
        assert!((p.covering_exponent + 0.5 * (1.0 - 1.0 / 1.5)).abs() < 1e-15);
        assert!(predicted_exponent(ClassKind::InfiniteDim { s: 0.0 }, 1.0, SubGaussian).is_err());
    }

    #[test]
    fn crossover_picks_covering() {
        // alpha = 0.5, q = 1: crossover at s < 2
        let p = predicted_exponent(ClassKind::InfiniteDim { s: 0.2 }, 0.5, SubExponential).unwrap();
        assert_eq!(p.crossover, Some(2.0));
        assert_eq!(p.method, Method::Covering);
        assert!(p.covering_exponent < p.chaining_exponent);
    }

    #[test]
    fn continuous_at_boundary_for_alpha_one() {
        for q in [SubExponential, SubGaussian] {
            let b = 1.0 / q.q();
            let lo = predicted_exponent(ClassKind::InfiniteDim { s: b * (1.0 - 1e-9) }, 1.0, q).unwrap();
            let hi = predicted_exponent(ClassKind::InfiniteDim { s: b * (1.0 + 1e-9) }, 1.0, q).unwrap();
            assert!((lo.chaining_exponent - hi.chaining_exponent).abs() < 1e-8);
        }
    }

    #[test]
    fn hoeffding_examples() {
        let t = hoeffding_tail(1.0, 1, 1.0).unwrap();
        assert!((t.standard - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((t.standard - 0.2707).abs() < 1e-4);
        assert!(hoeffding_tail(1e3, 1, 1.0).unwrap().standard < 1e-300);
        for m in [1, 3, 10] {
            let a = hoeffding_tail(0.3, m, 1.0).unwrap().standard;
            let b = hoeffding_tail(0.3, 2 * m, 1.0).unwrap().standard;
            assert!((b - a * a / 2.0).abs() < 1e-14);
        }
        let p = hoeffding_tail(0.3, 100, 1.0).unwrap();
        assert!(p.printed > p.standard);
    }

    #[test]
    fn pac_size() {
        let m = pac_sample_size(100, 0.01, 0.1, 1.0).unwrap();
        assert!((m - (1e4f64).ln() / 0.01).abs() < 1e-9);
        assert!(pac_sample_size(0, 0.01, 0.1, 1.0).is_err());
    }
}
