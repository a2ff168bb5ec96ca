//! Empirical stability certificates for reconstruction families.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{dist, norm, sub};
use crate::scalar::Scalar;

use super::class::ParamClass;
use super::penalty::Penalty;
use super::Family;

/// Two upper bounds on `||R_theta(y)||^2` for one `(theta, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBoundCheck {
    /// The bound that follows from comparing the objective at the minimizer
    /// and at zero.
    pub derived: f64,
    /// The bound in its commonly printed form, `||y||^2 / (2 eta) + M_g`.
    pub printed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticComparison {
    pub l_r: f64,
    pub l_r_prime: f64,
    /// Largest `||R_theta(y) - R_theta'(y)|| / ((L ||y|| + L') d^alpha)`.
    pub max_ratio: f64,
    pub relative_slack: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBoundReport {
    pub checked: usize,
    pub derived_violations: usize,
    pub printed_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub family: String,
    pub alpha: f64,
    #[serde(rename = "L_R")]
    pub l_r: f64,
    #[serde(rename = "L'_R")]
    pub l_r_prime: f64,
    #[serde(rename = "M_R")]
    pub m_r: f64,
    #[serde(rename = "M'_R")]
    pub m_r_prime: f64,
    pub r0: f64,
    pub probes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticComparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_bound: Option<NormBoundReport>,
}

/// Relative allowance when comparing empirical ratios against an analytic
/// stability constant.
pub const ANALYTIC_SLACK: f64 = 0.05;
/// Absolute allowance for iterative solvers stopped at a finite tolerance.
const SOLVER_SLACK: f64 = 1e-8;

/// Smallest `(a, b)`, in the sense of minimizing `a * mean(u) + b`, with
/// `v_i <= a u_i + b` for every probe `(u_i, v_i)`, `u_i, v_i >= 0`.
fn affine_envelope(points: &[(f64, f64)]) -> (f64, f64) {
    if points.is_empty() {
        return (0.0, 0.0);
    }
    let mean_u = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let intercept = |a: f64| points.iter().fold(0.0f64, |m, &(u, v)| m.max(v - a * u));
    let a_max = points.iter().filter(|p| p.0 > 0.0).fold(0.0f64, |m, &(u, v)| m.max(v / u));
    let cost = |a: f64| a * mean_u + intercept(a);
    let (mut lo, mut hi) = (0.0, a_max);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if cost(m1) <= cost(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let a = 0.5 * (lo + hi);
    let mut best = (a, intercept(a));
    for cand in [0.0, a_max] {
        if cost(cand) < best.0 * mean_u + best.1 {
            best = (cand, intercept(cand));
        }
    }
    best
}

/// Empirical constants `(L_R, L'_R)` and `(M_R, M'_R)` over all
/// `(theta, theta', y)` combinations of the probe sets.
pub fn certify_stability<T: Scalar>(
    family: &dyn Family<T>,
    class: &ParamClass<T>,
    probe_ys: &[Vec<T>],
    probe_pairs: &[(Vec<T>, Vec<T>)],
) -> Result<Certificate> {
    if probe_ys.is_empty() || probe_pairs.is_empty() {
        return invalid("certification needs non-empty probe sets");
    }
    let alpha = family.holder_exponent().as_f64();
    let analytic = family.stability_bound().map(|(l, lp)| (l.as_f64(), lp.as_f64()));

    struct Probe {
        y_norm: f64,
        ratio: Option<f64>,
        analytic_ratio: Option<f64>,
        analytic_ok: bool,
        outputs: [(f64, f64); 2],
        norm_viol: [usize; 2],
        norm_checked: usize,
    }

    let probes: Vec<Probe> = probe_pairs
        .par_iter()
        .flat_map_iter(|pair| probe_ys.iter().map(move |y| (pair, y)))
        .map(|((t1, t2), y)| -> Result<Probe> {
            let r1 = family.reconstruct(t1, y)?;
            let r2 = family.reconstruct(t2, y)?;
            let y_norm = norm(y).as_f64();
            let delta = dist(&r1, &r2).as_f64();
            let d = family.param_distance(t1, t2).as_f64();
            let dpow = d.powf(alpha);
            let ratio = (d > 0.0).then(|| delta / dpow);
            let (analytic_ratio, analytic_ok) = match analytic {
                Some((l, lp)) => {
                    let bound = (l * y_norm + lp) * dpow;
                    let ok = delta <= bound * (1.0 + ANALYTIC_SLACK) + SOLVER_SLACK;
                    (if bound > 0.0 { Some(delta / bound) } else { None }, ok)
                }
                None => (None, true),
            };
            let mut norm_viol = [0, 0];
            let mut norm_checked = 0;
            for (t, r) in [(t1, &r1), (t2, &r2)] {
                if let Some(b) = family.norm_bound(t, T::lit(y_norm)) {
                    let p2 = norm(r).as_f64().powi(2);
                    norm_checked += 1;
                    norm_viol[0] += usize::from(p2 > b.derived * (1.0 + 1e-9) + SOLVER_SLACK);
                    norm_viol[1] += usize::from(p2 > b.printed * (1.0 + 1e-9) + SOLVER_SLACK);
                }
            }
            Ok(Probe {
                y_norm,
                ratio,
                analytic_ratio,
                analytic_ok,
                outputs: [(y_norm, norm(&r1).as_f64()), (y_norm, norm(&r2).as_f64())],
                norm_viol,
                norm_checked,
            })
        })
        .collect::<Result<_>>()?;

    let holder: Vec<(f64, f64)> = probes.iter().filter_map(|p| p.ratio.map(|r| (p.y_norm, r))).collect();
    let (l_r, l_r_prime) = affine_envelope(&holder);
    let outputs: Vec<(f64, f64)> = probes.iter().flat_map(|p| p.outputs).collect();
    let (m_r, m_r_prime) = affine_envelope(&outputs);

    let analytic = analytic.map(|(l, lp)| AnalyticComparison {
        l_r: l,
        l_r_prime: lp,
        max_ratio: probes.iter().filter_map(|p| p.analytic_ratio).fold(0.0, f64::max),
        relative_slack: ANALYTIC_SLACK,
        passed: probes.iter().all(|p| p.analytic_ok),
    });
    let checked: usize = probes.iter().map(|p| p.norm_checked).sum();
    let norm_bound = (checked > 0).then(|| NormBoundReport {
        checked,
        derived_violations: probes.iter().map(|p| p.norm_viol[0]).sum(),
        printed_violations: probes.iter().map(|p| p.norm_viol[1]).sum(),
    });

    Ok(Certificate {
        family: family.name().to_string(),
        alpha,
        l_r,
        l_r_prime,
        m_r,
        m_r_prime,
        r0: class.diameter().as_f64(),
        probes: probes.len(),
        analytic,
        norm_bound,
    })
}

/// `count` pairs `(theta, theta')` in the class with `||theta - theta'|| <= r0`.
pub fn sample_probe_pairs<T: Scalar, R: Rng + ?Sized>(
    class: &ParamClass<T>,
    count: usize,
    r0: T,
    rng: &mut R,
) -> Result<Vec<(Vec<T>, Vec<T>)>> {
    let d = class.dim();
    (0..count)
        .map(|_| {
            let t = class.sample(rng);
            let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let step = r0.as_f64() * rng.random::<f64>() / n;
            let moved: Vec<T> = t.iter().zip(&dir).map(|(&a, &u)| a + T::lit(step * u)).collect();
            let t2 = class.project(&moved)?;
            Ok((t, t2))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GHypothesesReport {
    pub alpha: f64,
    /// i) midpoint convexity on consecutive probe pairs; `None` for
    /// `alpha < 1`, where convexity is not claimed.
    pub convex: Option<bool>,
    /// ii) `g >= 0` on all probes.
    pub nonnegative: bool,
    /// iii) `g_theta(0) = ||h||^(2 alpha)`.
    pub m_g: f64,
    /// iv) largest `|g_theta(y) - g_theta'(y)| / (||y||^2 d^(2 alpha))` over
    /// probes with `y != 0` and the given alternatives.
    pub c_g: Option<f64>,
    /// Whether the check ran inside the regime where all four conditions
    /// are claimed (`alpha = 1`).
    pub certified_regime: bool,
}

fn g_value<T: Scalar>(b: &Penalty<T>, h: &[T], alpha: T, y: &[T]) -> f64 {
    let r = sub(&b.apply(y), h);
    norm(&r).as_f64().powf(2.0 * alpha.as_f64())
}

/// Checks conditions i)-iv) for `g_(h,B)(y) = ||By - h||^(2 alpha)`.
pub fn check_g_hypotheses<T: Scalar>(
    b: &Penalty<T>,
    h: &[T],
    alpha: T,
    probe_ys: &[Vec<T>],
    alternatives: &[(Vec<T>, Penalty<T>)],
) -> Result<GHypothesesReport> {
    if probe_ys.is_empty() {
        return invalid("g-hypothesis check needs probes");
    }
    if !(alpha > T::zero() && alpha <= T::one()) {
        return invalid("alpha must lie in (0, 1]");
    }
    let n = h.len();
    b.check_dim(n)?;
    let values: Vec<f64> = probe_ys.iter().map(|y| g_value(b, h, alpha, y)).collect();
    let nonnegative = values.iter().all(|&v| v >= 0.0);
    let m_g = g_value(b, h, alpha, &vec![T::zero(); n]);
    let exact = alpha == T::one();
    let convex = exact.then(|| {
        probe_ys.windows(2).zip(values.windows(2)).all(|(ys, vs)| {
            let mid: Vec<T> = ys[0].iter().zip(&ys[1]).map(|(&a, &c)| T::lit(0.5) * (a + c)).collect();
            let gm = g_value(b, h, alpha, &mid);
            let avg = 0.5 * (vs[0] + vs[1]);
            gm <= avg + 1e-12 * (1.0 + avg.abs())
        })
    });
    let mut c_g: Option<f64> = None;
    for (h2, b2) in alternatives {
        b2.check_dim(n)?;
        let d = (dist(h, h2) + b.distance(b2, n)).as_f64();
        if d == 0.0 {
            continue;
        }
        let dpow = d.powf(2.0 * alpha.as_f64());
        for (y, &g1) in probe_ys.iter().zip(&values) {
            let y2 = norm(y).as_f64().powi(2);
            if y2 == 0.0 {
                continue;
            }
            let g2 = g_value(b2, h2, alpha, y);
            let ratio = (g1 - g2).abs() / (y2 * dpow);
            c_g = Some(c_g.map_or(ratio, |c: f64| c.max(ratio)));
        }
    }
    Ok(GHypothesesReport { alpha: alpha.as_f64(), convex, nonnegative, m_g, c_g, certified_regime: exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypotheses::{BMode, HMode, PenaltyLayout, TikhonovFamily, ZeroFamily};
    use crate::operators::{ForwardOperator, GaussianSpec};
    use crate::seed::substream;

    fn unit_ball_probes(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let c = ParamClass::ball(vec![0.0; dim], 1.0).unwrap();
        let mut rng = substream(seed, 0);
        (0..count).map(|_| c.sample(&mut rng)).collect()
    }

    #[test]
    fn envelope_of_exact_affine_data() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let (a, b) = affine_envelope(&pts);
        assert!((a - 2.0).abs() < 1e-9 && (b - 1.0).abs() < 1e-9, "{a} {b}");
        for (u, v) in pts {
            assert!(v <= a * u + b + 1e-12);
        }
    }

    #[test]
    fn zero_family_has_zero_constants() {
        let fam = ZeroFamily { param_dim: 2, output_dim: 3 };
        let class = ParamClass::ball(vec![0.0, 0.0], 1.0).unwrap();
        let mut rng = substream(1, 0);
        let pairs = sample_probe_pairs(&class, 10, 1.0, &mut rng).unwrap();
        let c = certify_stability::<f64>(&fam, &class, &unit_ball_probes(5, 3, 2), &pairs).unwrap();
        assert_eq!((c.l_r, c.l_r_prime, c.m_r, c.m_r_prime), (0.0, 0.0, 0.0, 0.0));
        let json = serde_json::to_value(&c).unwrap();
        for key in ["family", "alpha", "L_R", "L'_R", "M_R", "M'_R", "r0", "probes"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn tikhonov_fixed_b_respects_resolvent_bound() {
        let a = ForwardOperator::power_decay(3, 1.0).unwrap();
        let noise = GaussianSpec::isotropic(3, 0.1).unwrap();
        let b = Penalty::Diagonal(vec![1.0, 0.5, 2.0]);
        let layout = PenaltyLayout::new(3, HMode::Free, BMode::Fixed(b)).unwrap();
        let fam = TikhonovFamily::new(&a, &noise, layout).unwrap();
        let class = ParamClass::ball(vec![0.0; 3], 2.0).unwrap();
        let mut rng = substream(3, 0);
        let pairs = sample_probe_pairs(&class, 40, 1.0, &mut rng).unwrap();
        let c = certify_stability::<f64>(&fam, &class, &unit_ball_probes(10, 3, 4), &pairs).unwrap();
        let an = c.analytic.unwrap();
        assert!(an.passed);
        assert!(an.max_ratio <= 1.0 + 1e-9, "{}", an.max_ratio);
        assert_eq!(c.alpha, 1.0);
    }

    #[test]
    fn g_hypotheses_examples() {
        let ys = unit_ball_probes(50, 2, 9);
        let r = check_g_hypotheses(&Penalty::Scalar(1.0), &[0.0, 0.0], 1.0, &ys, &[]).unwrap();
        assert_eq!(r.m_g, 0.0);
        assert_eq!(r.convex, Some(true));
        assert!(r.nonnegative);
        assert!(r.c_g.is_none());

        let r = check_g_hypotheses(&Penalty::Scalar(1.0), &[2.0, 0.0], 1.0, &ys, &[]).unwrap();
        assert!((r.m_g - 4.0).abs() < 1e-12);

        let r = check_g_hypotheses(&Penalty::Scalar(1.0), &[0.0, 0.0], 0.5, &ys, &[]).unwrap();
        assert_eq!(r.convex, None);
        assert!(!r.certified_regime);
    }

    #[test]
    fn c_g_is_stable_under_probe_refinement() {
        let b = Penalty::Diagonal(vec![1.0, 0.5]);
        let alts = vec![
            (vec![0.0, 0.0], Penalty::Diagonal(vec![1.5, 0.5])),
            (vec![0.0, 0.0], Penalty::Diagonal(vec![0.5, 1.0])),
            (vec![0.0, 0.0], Penalty::Diagonal(vec![2.0, -0.5])),
        ];
        let coarse = check_g_hypotheses(&b, &[0.0, 0.0], 1.0, &unit_ball_probes(400, 2, 11), &alts).unwrap();
        let fine = check_g_hypotheses(&b, &[0.0, 0.0], 1.0, &unit_ball_probes(800, 2, 11), &alts).unwrap();
        let (c1, c2) = (coarse.c_g.unwrap(), fine.c_g.unwrap());
        assert!(c1.is_finite() && (c2 / c1 - 1.0).abs() < 0.1, "{c1} {c2}");
    }
}
