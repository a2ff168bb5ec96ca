//! Multi-start projected gradient descent on the empirical risk.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hypotheses::{Family, ParamClass};
use crate::linalg::{dist, dot, sub};
use crate::seed::substream;
use crate::stochastics::TrainingSet;

use super::{loss_sum, SUM_CHUNK};

/// Sufficient-decrease constant of the Armijo test.
const ARMIJO: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErmOptions {
    /// Number of starts: the class center plus `starts - 1` projected random points.
    pub starts: usize,
    /// Cap on the projected-gradient residual `||theta - P(theta - grad)||`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Finite-difference step relative to the class diameter.
    pub fd_step: f64,
}

impl Default for ErmOptions {
    fn default() -> Self {
        Self { starts: 8, tol: 1e-7, max_iter: 5000, seed: 0x00e2_0001, fd_step: 1e-5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start: Vec<f64>,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErmResult {
    /// Best point over all starts.
    pub theta_hat: Vec<f64>,
    pub objective_hat: f64,
    /// Point reached from the class center.
    pub theta_tilde: Vec<f64>,
    pub objective_tilde: f64,
    /// Projected-gradient residual at `theta_hat`.
    pub residual: f64,
    pub converged: bool,
    pub starts: Vec<StartOutcome>,
}

struct Objective<'a> {
    family: &'a dyn Family<f64>,
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
    fd_h: f64,
}

impl Objective<'_> {
    fn value(&self, theta: &[f64]) -> Result<f64> {
        let r = self.family.bind(theta)?;
        Ok(loss_sum(&*r, &self.pairs)? / self.pairs.len() as f64)
    }

    fn value_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = self.pairs.len() as f64;
        if self.family.loss_gradient(theta, &self.pairs[..0]).is_some() {
            let parts = self
                .pairs
                .par_chunks(SUM_CHUNK)
                .map(|c| self.family.loss_gradient(theta, c).expect("analytic gradient available"))
                .collect::<Result<Vec<_>>>()?;
            let mut value = 0.0;
            let mut grad = vec![0.0; theta.len()];
            for (v, g) in parts {
                value += v;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            grad.iter_mut().for_each(|g| *g /= m);
            return Ok((value / m, grad));
        }
        let value = self.value(theta)?;
        let mut grad = vec![0.0; theta.len()];
        let mut probe = theta.to_vec();
        for i in 0..theta.len() {
            let h = self.fd_h;
            probe[i] = theta[i] + h;
            let up = self.value(&probe);
            probe[i] = theta[i] - h;
            let down = self.value(&probe);
            probe[i] = theta[i];
            grad[i] = match (up, down) {
                (Ok(u), Ok(d)) => (u - d) / (2.0 * h),
                (Ok(u), Err(_)) => (u - value) / h,
                (Err(_), Ok(d)) => (value - d) / h,
                (Err(e), Err(_)) => return Err(e),
            };
        }
        Ok((value, grad))
    }
}

fn residual(class: &ParamClass<f64>, theta: &[f64], grad: &[f64]) -> Result<f64> {
    let step: Vec<f64> = theta.iter().zip(grad).map(|(t, g)| t - g).collect();
    Ok(dist(theta, &class.project(&step)?))
}

fn descend(class: &ParamClass<f64>, obj: &Objective<'_>, start: Vec<f64>, opts: &ErmOptions) -> Result<StartOutcome> {
    let mut theta = class.project(&start)?;
    let (mut f, mut g) = obj.value_grad(&theta)?;
    let mut t = 1.0;
    let mut res = residual(class, &theta, &g)?;
    let mut iterations = 0;
    while iterations < opts.max_iter && res > opts.tol {
        iterations += 1;
        let mut accepted = None;
        while t > 1e-20 {
            let trial: Vec<f64> = theta.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let next = class.project(&trial)?;
            let d = dist(&next, &theta);
            if d == 0.0 {
                break;
            }
            // failed evaluations (e.g. a singular normal matrix) count as rejections
            if let Ok(fv) = obj.value(&next) {
                if fv <= f - ARMIJO / t * d * d {
                    accepted = Some(next);
                    break;
                }
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            break;
        };
        let (fn_, gn) = obj.value_grad(&next)?;
        let s = sub(&next, &theta);
        let yv = sub(&gn, &g);
        let sy = dot(&s, &yv);
        t = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-10, 1e10) } else { (2.0 * t).min(1e10) };
        theta = next;
        f = fn_;
        g = gn;
        res = residual(class, &theta, &g)?;
    }
    Ok(StartOutcome { start, theta, objective: f, residual: res, iterations, converged: res <= opts.tol })
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

fn canonical_order(pairs: &[(Vec<f64>, Vec<f64>)]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|(xa, ya), (xb, yb)| lex(ya, yb).then_with(|| lex(xa, xb)));
    sorted
}

/// Empirical risk minimization over `class`.
///
/// Pairs are first put in a canonical order, so the result does not depend
/// on how the training set is ordered. Among the starts, the lowest objective
/// wins, ties going to the lexicographically smallest parameter.
pub fn erm_solve(
    class: &ParamClass<f64>,
    family: &dyn Family<f64>,
    ts: &TrainingSet<f64>,
    opts: &ErmOptions,
) -> Result<ErmResult> {
    if class.dim() != family.param_dim() {
        return invalid(format!(
            "class dimension {} does not match family parameter dimension {}",
            class.dim(),
            family.param_dim()
        ));
    }
    if opts.starts == 0 || !(opts.tol > 0.0) || !(opts.fd_step > 0.0) {
        return invalid("ERM needs at least one start, a positive tolerance and a positive finite-difference step");
    }
    let fd_h = opts.fd_step * class.diameter().max(1e-8);
    let obj = Objective { family, pairs: canonical_order(ts.pairs()), fd_h };
    let starts: Vec<Vec<f64>> = std::iter::once(class.center())
        .chain((1..opts.starts).map(|k| class.sample(&mut substream(opts.seed, k as u64))))
        .collect();
    let outcomes: Vec<Result<StartOutcome>> = starts.into_par_iter().map(|s| descend(class, &obj, s, opts)).collect();
    let tilde = match &outcomes[0] {
        Ok(o) => Some((o.theta.clone(), o.objective)),
        Err(_) => None,
    };
    let mut first_err = None;
    let mut ok = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o {
            Ok(o) => ok.push(o),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(best) = ok
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then_with(|| lex(&a.theta, &b.theta)))
        .cloned()
    else {
        return Err(first_err.expect("every start failed"));
    };
    let (theta_tilde, objective_tilde) = tilde.unwrap_or_else(|| (best.theta.clone(), best.objective));
    Ok(ErmResult {
        theta_hat: best.theta,
        objective_hat: best.objective,
        theta_tilde,
        objective_tilde,
        residual: best.residual,
        converged: best.converged,
        starts: ok,
    })
}
