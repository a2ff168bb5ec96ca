//! Covering numbers: closed-form models and an empirical greedy cover.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::linalg::dist;
use crate::scalar::Scalar;

/// `(2 D sqrt(d) / r)^d`, the number of radius-`r` balls that cover a
/// `d`-dimensional ball of radius `D`; one ball suffices once `r > D`.
pub fn covering_ball<T: Scalar>(d: usize, radius: T, r: T) -> Result<T> {
    Ok(log_covering_ball(d, radius, r)?.exp())
}

fn log_covering_ball<T: Scalar>(d: usize, radius: T, r: T) -> Result<T> {
    if d == 0 {
        return invalid("dimension must be positive");
    }
    if !(radius > T::zero()) {
        return invalid("radius must be positive");
    }
    if !(r > T::zero()) {
        return invalid(format!("covering radius must be positive, got {r}"));
    }
    if r > radius {
        return Ok(T::zero());
    }
    let df = T::from_usize_lossy(d);
    Ok(df * (T::lit(2.0) * radius * df.sqrt() / r).ln())
}

/// `c r^(-1/s)`, the metric-entropy model of a Sobolev-type ball.
pub fn covering_sobolev_log<T: Scalar>(s: T, r: T, c: T) -> Result<T> {
    if !(s > T::zero()) || !(c > T::zero()) {
        return invalid("smoothness and constant must be positive");
    }
    if !(r > T::zero()) {
        return invalid(format!("covering radius must be positive, got {r}"));
    }
    Ok(c * r.powf(-T::one() / s))
}

/// Size of a greedy cover of `points` by radius-`r` balls centred at
/// points of the set. Each step takes the first uncovered point and, among
/// the balls containing it, the one covering the most uncovered points
/// (ties to the lowest index).
///
/// The result bounds from above the covering number of the set with centres
/// restricted to the set; on sorted one-dimensional data it is exact.
pub fn greedy_cover<T: Scalar>(points: &[Vec<T>], r: T) -> Result<usize> {
    if points.is_empty() {
        return invalid("greedy cover needs at least one point");
    }
    if !(r >= T::zero()) {
        return invalid("covering radius must be non-negative");
    }
    let dim = points[0].len();
    for p in points {
        check_len(dim, p.len())?;
    }
    let n = points.len();
    let neighbours: Vec<Vec<u32>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(&points[i], &points[j]) <= r).map(|j| j as u32).collect())
        .collect();
    let mut uncovered_count: Vec<usize> = neighbours.iter().map(Vec::len).collect();
    let mut covered = vec![false; n];
    let mut centres = 0;
    for first in 0..n {
        if covered[first] {
            continue;
        }
        let best = neighbours[first]
            .iter()
            .map(|&c| c as usize)
            .max_by(|&a, &b| uncovered_count[a].cmp(&uncovered_count[b]).then(b.cmp(&a)))
            .expect("a point is its own neighbour");
        centres += 1;
        for &p in &neighbours[best] {
            let p = p as usize;
            if covered[p] {
                continue;
            }
            covered[p] = true;
            for &q in &neighbours[p] {
                uncovered_count[q as usize] -= 1;
            }
        }
    }
    Ok(centres)
}

/// Upper model for `log N(Theta, r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoveringModel<T> {
    /// `d log(2 D sqrt(d) / r)` for `r <= D`, else 0.
    EuclideanBall { d: usize, radius: T },
    /// `c r^(-1/s)`.
    EntropyDecay { s: T, c: T },
    /// A fixed value (0 for a singleton).
    Constant { log_n: T },
}

impl<T: Scalar> CoveringModel<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            CoveringModel::EuclideanBall { d, radius } => {
                if *d == 0 || !(*radius > T::zero()) {
                    return invalid("euclidean_ball covering needs d >= 1 and radius > 0");
                }
            }
            CoveringModel::EntropyDecay { s, c } => {
                if !(*s > T::zero()) || !(*c > T::zero()) {
                    return invalid("entropy_decay covering needs s > 0 and c > 0");
                }
            }
            CoveringModel::Constant { log_n } => {
                if !(*log_n >= T::zero()) {
                    return invalid("constant covering needs log N >= 0");
                }
            }
        }
        Ok(())
    }

    pub fn log_n(&self, r: T) -> Result<T> {
        match self {
            CoveringModel::EuclideanBall { d, radius } => log_covering_ball(*d, *radius, r),
            CoveringModel::EntropyDecay { s, c } => covering_sobolev_log(*s, r, *c),
            CoveringModel::Constant { log_n } => {
                if !(r > T::zero()) {
                    return invalid("covering radius must be positive");
                }
                Ok(*log_n)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interval_grid(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![-1.0 + 2.0 * i as f64 / (n - 1) as f64]).collect()
    }

    #[test]
    fn ball_formula_examples() {
        assert!((covering_ball(1, 1.0f64, 1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((covering_ball(2, 1.0f64, 1.0).unwrap() - 8.0).abs() < 1e-12);
        assert!((covering_ball(1, 1.0f64, 0.4).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(covering_ball(3, 1.0f64, 1.5).unwrap(), 1.0);
        assert!(covering_ball(1, 1.0f64, 0.0).is_err());
        assert!(covering_ball(1, 1.0f64, -1.0).is_err());
    }

    #[test]
    fn sobolev_examples() {
        assert_eq!(covering_sobolev_log(1.0, 1.0, 1.0).unwrap(), 1.0);
        let a = covering_sobolev_log(1.0f64, 0.5, 3.0).unwrap();
        let b = covering_sobolev_log(1.0, 0.25, 3.0).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
        assert!((covering_sobolev_log(0.5f64, 0.1, 2.0).unwrap() - 200.0).abs() < 1e-9);
        assert!(covering_sobolev_log(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn greedy_examples() {
        let grid = interval_grid(201);
        assert_eq!(greedy_cover(&grid, 1.0).unwrap(), 1);
        let k = greedy_cover(&grid, 0.4).unwrap();
        assert!((2..=3).contains(&k), "{k}");
        assert_eq!(k, 3);
        assert!(k as f64 <= covering_ball(1, 1.0f64, 0.4).unwrap());
        assert_eq!(greedy_cover(&[vec![-1.0, 0.0], vec![1.0, 0.0]], 0.5).unwrap(), 2);
        assert!(greedy_cover::<f64>(&[], 1.0).is_err());
    }

    #[test]
    fn greedy_never_exceeds_ball_formula() {
        for d in 1..=3usize {
            let side = [41usize, 11, 5][d - 1];
            let mut pts = Vec::new();
            for idx in 0..side.pow(d as u32) {
                let mut p = Vec::with_capacity(d);
                let mut k = idx;
                for _ in 0..d {
                    p.push(-1.0 + 2.0 * (k % side) as f64 / (side - 1) as f64 / (d as f64).sqrt());
                    k /= side;
                }
                pts.push(p);
            }
            for r in [0.2, 0.5, 1.0] {
                let g = greedy_cover(&pts, r).unwrap();
                assert!(g as f64 <= covering_ball(d, 1.0f64, r).unwrap().ceil(), "d={d} r={r} greedy={g}");
            }
        }
    }

    proptest! {
        #[test]
        fn log_n_is_non_increasing(r1 in 1e-4f64..2.0, r2 in 1e-4f64..2.0, s in 0.2f64..4.0) {
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            for m in [
                CoveringModel::EuclideanBall { d: 3, radius: 1.0 },
                CoveringModel::EntropyDecay { s, c: 1.0 },
                CoveringModel::Constant { log_n: 0.0 },
            ] {
                prop_assert!(m.log_n(hi).unwrap() <= m.log_n(lo).unwrap());
                prop_assert!(m.log_n(lo).unwrap().is_finite());
            }
        }
    }
}
