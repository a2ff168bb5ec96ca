//! Covering and chaining bounds on the expected sample error, predicted rate
//! exponents, and finite-class concentration formulas.
//!
//! Absolute constants are inputs (default 1), so bound levels are only
//! meaningful up to a constant factor; their shape in `m` is what gets
//! compared with experiments.

mod covering;
mod rates;

pub use covering::{covering_ball, covering_sobolev_log, greedy_cover, CoveringModel};
pub use rates::{hoeffding_tail, pac_sample_size, predicted_exponent, ClassKind, HoeffdingTail, Method, RatePrediction};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quad::integrate;
use crate::scalar::Scalar;
use crate::stochastics::OrliczOrder;

/// Relative tolerance for the entropy integral.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Points in the log grid over which the covering bound is minimized.
pub const R_GRID_POINTS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs<T: Scalar> {
    /// Orlicz constant of the increments (`K` or `K_l`).
    #[serde(rename = "K")]
    pub k: T,
    /// Bound on the expected local Hölder constant of the loss (`M_l`).
    #[serde(rename = "M_l")]
    pub m_loss: T,
    pub q: OrliczOrder,
    pub alpha: T,
    pub m: usize,
    /// Diameter of the parameter class.
    #[serde(rename = "D")]
    pub diameter: T,
    #[serde(rename = "C", default = "one")]
    pub c: T,
    #[serde(rename = "C1", default = "one")]
    pub c1: T,
    #[serde(rename = "C2", default = "one")]
    pub c2: T,
}

fn one<T: Scalar>() -> T {
    T::one()
}

impl<T: Scalar> BoundInputs<T> {
    pub fn new(k: T, m_loss: T, q: OrliczOrder, alpha: T, m: usize, diameter: T) -> Result<Self> {
        let b = Self { k, m_loss, q, alpha, m, diameter, c: T::one(), c1: T::one(), c2: T::one() };
        b.validate()?;
        Ok(b)
    }

    pub fn with_m(&self, m: usize) -> Self {
        Self { m, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: T| v >= T::zero() && v.is_finite();
        if !nonneg(self.k) || !nonneg(self.m_loss) {
            return invalid("K and M_l must be finite and non-negative");
        }
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return invalid("alpha must lie in (0, 1]");
        }
        if self.m == 0 {
            return invalid("m must be at least 1");
        }
        if !(self.diameter >= T::one()) || !self.diameter.is_finite() {
            return invalid("diameter D must be finite and at least 1");
        }
        if !(self.c > T::zero() && self.c1 > T::zero() && self.c2 > T::zero()) {
            return invalid("absolute constants must be positive");
        }
        Ok(())
    }

    fn scale(&self) -> T {
        self.k / T::from_usize_lossy(self.m).sqrt()
    }

    fn inv_q(&self) -> T {
        T::lit(1.0 / self.q.q())
    }
}

/// `C (K / sqrt(m)) (log N(r))^(1/q) + 2 M_l r^alpha`.
pub fn covering_bound<T: Scalar>(inputs: &BoundInputs<T>, cov: &CoveringModel<T>, r: T) -> Result<T> {
    inputs.validate()?;
    cov.validate()?;
    if !(r > T::zero()) {
        return invalid("r must be positive");
    }
    let entropy = cov.log_n(r)?.powf(inputs.inv_q());
    Ok(inputs.c * inputs.scale() * entropy + T::lit(2.0) * inputs.m_loss * r.powf(inputs.alpha))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEvaluation<T: Scalar> {
    pub inputs: BoundInputs<T>,
    pub r_grid: Vec<T>,
    pub values: Vec<T>,
    pub argmin_r: T,
    pub min_value: T,
}

/// `n` log-spaced radii from `1e-6 D` to `D`.
pub fn r_grid<T: Scalar>(diameter: T, n: usize) -> Vec<T> {
    let lo = (T::lit(1e-6) * diameter).ln();
    let hi = diameter.ln();
    (0..n)
        .map(|i| {
            if i + 1 == n {
                diameter
            } else {
                (lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1)).exp()
            }
        })
        .collect()
}

fn scan<T: Scalar>(inputs: &BoundInputs<T>, f: impl Fn(T) -> Result<T>) -> Result<BoundEvaluation<T>> {
    let grid = r_grid(inputs.diameter, R_GRID_POINTS);
    let values = grid.iter().map(|&r| f(r)).collect::<Result<Vec<T>>>()?;
    let (i, &min_value) = values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &T)>, (i, v)| match best {
            Some((_, b)) if *b <= *v => best,
            _ => Some((i, v)),
        })
        .expect("non-empty grid");
    Ok(BoundEvaluation { inputs: inputs.clone(), argmin_r: grid[i], r_grid: grid, values, min_value })
}

/// The covering bound on the radius grid, with its minimizer.
pub fn covering_bound_scan<T: Scalar>(inputs: &BoundInputs<T>, cov: &CoveringModel<T>) -> Result<BoundEvaluation<T>> {
    scan(inputs, |r| covering_bound(inputs, cov, r))
}

/// The chaining bound on the radius grid, with its minimizer.
pub fn chaining_bound_scan<T: Scalar>(inputs: &BoundInputs<T>, cov: &CoveringModel<T>) -> Result<BoundEvaluation<T>> {
    scan(inputs, |r| chaining_bound(inputs, cov, r))
}

/// `int_lower^upper (log N(c^(1/alpha)))^(1/q) dc`.
///
/// Singular endpoints are removed by substitution: `u = c^(1 - beta)` with
/// `beta = 1 / (alpha s q)` for entropy decay (the integrand becomes
/// constant), `c = c_max e^(-t)` for the Euclidean ball.
pub fn entropy_integral<T: Scalar>(
    inputs: &BoundInputs<T>,
    cov: &CoveringModel<T>,
    lower: T,
    upper: T,
) -> Result<T> {
    inputs.validate()?;
    cov.validate()?;
    if !(lower >= T::zero()) {
        return invalid("lower limit must be non-negative");
    }
    if lower >= upper {
        return Ok(T::zero());
    }
    let inv_q = inputs.inv_q();
    let tol = T::lit(QUADRATURE_TOL);
    match cov {
        CoveringModel::Constant { log_n } => Ok(log_n.powf(inv_q) * (upper - lower)),
        CoveringModel::EntropyDecay { s, c } => {
            let beta = T::one() / (inputs.alpha * *s * T::lit(inputs.q.q()));
            let amp = c.powf(inv_q);
            if (beta - T::one()).abs() < T::lit(1e-12) {
                if lower == T::zero() {
                    return invalid(
                        "entropy integral diverges at 0: alpha s q = 1 (needs alpha s q > 1 to integrate down to r = 0)",
                    );
                }
                return integrate(|_t: T| amp, lower.ln(), upper.ln(), tol);
            }
            let e = T::one() - beta;
            if lower == T::zero() && e <= T::zero() {
                return invalid(format!(
                    "entropy integral diverges at 0: alpha s q = {} <= 1 (needs alpha s q > 1 to integrate down to r = 0)",
                    T::one() / beta
                ));
            }
            // dc = c^beta du / (1 - beta), c^-beta c^beta = 1
            let ua = lower.powf(e);
            let ub = upper.powf(e);
            integrate(|_u: T| amp / e, ua, ub, tol)
        }
        CoveringModel::EuclideanBall { d, radius } => {
            // log N(c^(1/alpha)) = d (ln(2 R sqrt(d)) - ln(c) / alpha) for c <= R^alpha
            let c_max = upper.min(radius.powf(inputs.alpha));
            if lower >= c_max {
                return Ok(T::zero());
            }
            let df = T::from_usize_lossy(*d);
            let k0 = (T::lit(2.0) * *radius * df.sqrt()).ln();
            let alpha = inputs.alpha;
            let t_max = if lower > T::zero() { (c_max / lower).ln().min(T::lit(200.0)) } else { T::lit(200.0) };
            let f = |t: T| -> T {
                let ln_c = c_max.ln() - t;
                let ln_n = df * (k0 - ln_c / alpha);
                ln_n.max(T::zero()).powf(inv_q) * ln_c.exp()
            };
            // the exponential tail is negligible far out; split to help the quadrature
            let split = t_max.min(T::lit(40.0));
            let head = integrate(f, T::zero(), split, tol)?;
            let tail = if t_max > split { integrate(f, split, t_max, tol)? } else { T::zero() };
            Ok(head + tail)
        }
    }
}

/// `C1 (K / sqrt(m)) int_{r^alpha / 4}^{D} (log N(c^(1/alpha)))^(1/q) dc + C2 K r^alpha`.
pub fn chaining_bound<T: Scalar>(inputs: &BoundInputs<T>, cov: &CoveringModel<T>, r: T) -> Result<T> {
    if !(r >= T::zero()) {
        return invalid("r must be non-negative");
    }
    let lower = r.powf(inputs.alpha) / T::lit(4.0);
    let integral = entropy_integral(inputs, cov, lower, inputs.diameter)?;
    Ok(inputs.c1 * inputs.scale() * integral + inputs.c2 * inputs.k * r.powf(inputs.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs(k: f64, ml: f64, q: OrliczOrder, alpha: f64, m: usize, d: f64) -> BoundInputs<f64> {
        BoundInputs::new(k, ml, q, alpha, m, d).unwrap()
    }

    #[test]
    fn json_names() {
        let b = inputs(1.0, 2.0, OrliczOrder::SubGaussian, 1.0, 10, 1.0);
        let v = serde_json::to_value(&b).unwrap();
        for key in ["K", "M_l", "q", "alpha", "m", "D", "C", "C1", "C2"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let parsed: BoundInputs<f64> = serde_json::from_str(r#"{"K":1,"M_l":2,"q":2,"alpha":1,"m":10,"D":1}"#).unwrap();
        assert_eq!(parsed, b);
    }

    #[test]
    fn invalid_inputs() {
        assert!(BoundInputs::new(1.0, 1.0, OrliczOrder::SubGaussian, 1.5, 10, 1.0).is_err());
        assert!(BoundInputs::new(1.0, 1.0, OrliczOrder::SubGaussian, 1.0, 0, 1.0).is_err());
        assert!(BoundInputs::new(-1.0, 1.0, OrliczOrder::SubGaussian, 1.0, 1, 1.0).is_err());
        assert!(BoundInputs::new(1.0, 1.0, OrliczOrder::SubGaussian, 1.0, 1, 0.5).is_err());
    }

    #[test]
    fn zero_stability_term_is_minimized_at_d() {
        let b = inputs(1.0, 0.0, OrliczOrder::SubGaussian, 1.0, 100, 1.0);
        let e = covering_bound_scan(&b, &CoveringModel::EuclideanBall { d: 2, radius: 1.0 }).unwrap();
        assert_eq!(e.argmin_r, 1.0);
        assert!(e.values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_orlicz_constant_is_minimized_at_smallest_r() {
        let b = inputs(0.0, 1.0, OrliczOrder::SubGaussian, 0.5, 100, 2.0);
        let e = covering_bound_scan(&b, &CoveringModel::EuclideanBall { d: 2, radius: 1.0 }).unwrap();
        assert_eq!(e.argmin_r, e.r_grid[0]);
        assert!((e.min_value - 2.0 * e.r_grid[0].sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_minimum_matches_dense_search() {
        let b = inputs(1.0, 1.0, OrliczOrder::SubGaussian, 1.0, 1024, 1.0);
        let cov = CoveringModel::EuclideanBall { d: 4, radius: 1.0 };
        let e = covering_bound_scan(&b, &cov).unwrap();
        let dense = r_grid(1.0, 10_000)
            .into_iter()
            .map(|r| covering_bound(&b, &cov, r).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!((e.min_value / dense - 1.0).abs() < 0.01, "{} vs {dense}", e.min_value);
    }

    #[test]
    fn singleton_chaining_is_residual_only() {
        let b = inputs(2.0, 1.0, OrliczOrder::SubGaussian, 0.5, 50, 1.0);
        let v = chaining_bound(&b, &CoveringModel::Constant { log_n: 0.0 }, 0.25).unwrap();
        assert!((v - 2.0 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn entropy_decay_closed_form() {
        for d in [1.0, 2.0, 7.5] {
            let b = inputs(1.0, 1.0, OrliczOrder::SubExponential, 1.0, 64, d);
            let cov = CoveringModel::EntropyDecay { s: 2.0, c: 1.0 };
            let i = entropy_integral(&b, &cov, 0.0, d).unwrap();
            assert!((i / (2.0 * d.sqrt()) - 1.0).abs() < 1e-6);
            let v = chaining_bound(&b, &cov, 0.0).unwrap();
            assert!((v - 2.0 * d.sqrt() / 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn divergent_regime_rejected_at_zero() {
        let b = inputs(1.0, 1.0, OrliczOrder::SubExponential, 1.0, 64, 1.0);
        let err = chaining_bound(&b, &CoveringModel::EntropyDecay { s: 0.5, c: 1.0 }, 0.0).unwrap_err();
        assert!(err.to_string().contains("alpha s q"), "{err}");
        assert!(chaining_bound(&b, &CoveringModel::EntropyDecay { s: 0.5, c: 1.0 }, 0.1).is_ok());
        assert!(chaining_bound(&b, &CoveringModel::EntropyDecay { s: 1.0, c: 1.0 }, 0.0).is_err());
        assert!(chaining_bound(&b, &CoveringModel::EntropyDecay { s: 1.0, c: 1.0 }, 0.1).is_ok());
    }

    #[test]
    fn euclidean_integral_matches_antiderivative() {
        // q = 1: int d (k0 - ln c / alpha) dc = d [k0 c - (c ln c - c) / alpha]
        for (d, radius, alpha, lo, hi) in [(3usize, 1.0, 1.0, 0.0, 1.0), (2, 2.0, 0.5, 0.01, 1.2), (5, 1.5, 0.7, 1e-4, 1.0)] {
            let b = inputs(1.0, 1.0, OrliczOrder::SubExponential, alpha, 10, 2.0);
            let cov = CoveringModel::EuclideanBall { d, radius };
            let got = entropy_integral(&b, &cov, lo, hi).unwrap();
            let df = d as f64;
            let k0 = (2.0 * radius * df.sqrt()).ln();
            let c_max = f64::min(hi, radius.powf(alpha));
            let anti = |c: f64| if c == 0.0 { 0.0 } else { df * (k0 * c - (c * c.ln() - c) / alpha) };
            let exact = anti(c_max) - anti(lo);
            assert!((got / exact - 1.0).abs() < 1e-6, "{got} vs {exact}");
        }
    }

    #[test]
    fn positive_r_can_beat_r_zero() {
        // the dropped integral over [0, r/4] outweighs the residual K r
        let b = inputs(1.0, 1.0, OrliczOrder::SubExponential, 1.0, 100, 1.0);
        let cov = CoveringModel::EntropyDecay { s: 1.2, c: 1.0 };
        let at_zero = chaining_bound(&b, &cov, 0.0).unwrap();
        let at_r = chaining_bound(&b, &cov, 1e-3).unwrap();
        let dropped = 0.1 * (2.5e-4f64).powf(1.0 / 6.0) * 6.0;
        assert!((at_zero - at_r - (dropped - 1e-3)).abs() < 1e-6, "{at_zero} {at_r}");
        assert!(at_r < at_zero);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn bounds_non_increasing_in_m(m in 1usize..1000, r in 1e-3f64..1.0, q in 1u8..=2) {
            let q = OrliczOrder::try_from(q).unwrap();
            let cov = CoveringModel::EuclideanBall { d: 3, radius: 1.0 };
            let b = inputs(1.0, 1.0, q, 1.0, m, 1.0);
            let b2 = b.with_m(2 * m);
            prop_assert!(covering_bound(&b2, &cov, r).unwrap() <= covering_bound(&b, &cov, r).unwrap());
            prop_assert!(chaining_bound(&b2, &cov, r).unwrap() <= chaining_bound(&b, &cov, r).unwrap());
        }

        #[test]
        fn chaining_terms_are_monotone_in_r(r1 in 0.0f64..1.0, r2 in 0.0f64..1.0, s in 1.2f64..5.0) {
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let b = inputs(1.0, 1.0, OrliczOrder::SubExponential, 1.0, 100, 1.0);
            let cov = CoveringModel::EntropyDecay { s, c: 1.0 };
            let i_lo = entropy_integral(&b, &cov, lo / 4.0, 1.0).unwrap();
            let i_hi = entropy_integral(&b, &cov, hi / 4.0, 1.0).unwrap();
            prop_assert!(i_hi <= i_lo * (1.0 + 1e-9));
            let at = |r: f64| chaining_bound(&b, &cov, r).unwrap() - b.c1 * b.scale() * entropy_integral(&b, &cov, r / 4.0, 1.0).unwrap();
            prop_assert!(at(hi) >= at(lo) - 1e-12);
        }
    }
}
