//! The sample-error rate experiment.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use learnrec::bounds::{chaining_bound_scan, predicted_exponent, ClassKind, RatePrediction};
use learnrec::fit::{loglog_fit, LogLogFit};
use learnrec::hypotheses::Family;
use learnrec::risk::{erm_solve, expected_losses_mc, optimal_target_proxy, ProxyTarget};
use learnrec::stochastics::draw_training_set;
use learnrec::{BoundInputs, ParamClass};

use crate::config::{ExperimentConfig, Stream};

pub const CSV_HEADER: &str = "m,trial,sample_error,emp_risk_hat,exp_loss_hat,exp_loss_star,erm_residual,seed";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub m: usize,
    pub trial: usize,
    pub sample_error: f64,
    pub emp_risk_hat: f64,
    pub exp_loss_hat: f64,
    pub exp_loss_star: f64,
    pub erm_residual: f64,
    pub seed: u64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerM {
    pub m: usize,
    /// Trimmed mean of the sample error.
    pub mean: f64,
    pub stderr: f64,
    /// Trials entering the trimmed mean.
    pub n: usize,
    pub untrimmed_mean: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domination {
    /// Ratio empirical / bound at the smallest `m`, used to rescale the bound.
    pub calibration: f64,
    pub bound: Vec<f64>,
    /// Empirical mean over calibrated bound, per `m`.
    pub ratios: Vec<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monotonicity {
    pub passed: bool,
    /// Adjacent grid pairs `(m_i, m_i+1)` where the mean rose by more than two
    /// combined standard errors.
    pub violations: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub config_digest: String,
    pub theta_star: Vec<f64>,
    pub per_m: Vec<PerM>,
    pub slope: Option<f64>,
    pub slope_ci: Option<[f64; 2]>,
    pub predicted_exponent: f64,
    pub verdict: String,
    pub prediction: RatePrediction,
    pub band: [f64; 2],
    pub fit: Option<LogLogFit>,
    pub proxy: ProxyTarget,
    pub failures: usize,
    pub trials: usize,
    /// Whether the family's stability certificate held on the configured class.
    pub certified: bool,
    pub domination: Option<Domination>,
    pub monotonicity: Option<Monotonicity>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RateRun {
    pub summary: RateSummary,
    pub rows: Vec<TrialRow>,
}

pub fn class_kind(class: &ParamClass) -> ClassKind {
    match class {
        ParamClass::SobolevBall { smoothness, .. } => ClassKind::InfiniteDim { s: *smoothness },
        _ => ClassKind::FiniteDim { d: class.dim() },
    }
}

/// Bound inputs for the configured class, with `D = max(1, diameter)`.
pub fn bound_inputs(cfg: &ExperimentConfig, family: &dyn Family<f64>, m: usize) -> anyhow::Result<BoundInputs> {
    let b = &cfg.bounds;
    let mut inputs = BoundInputs::new(
        b.k,
        b.m_loss,
        cfg.orlicz_order(),
        family.holder_exponent(),
        m,
        cfg.class.diameter().max(1.0),
    )?;
    inputs.c = b.c;
    inputs.c1 = b.c1;
    inputs.c2 = b.c2;
    inputs.validate()?;
    Ok(inputs)
}

fn trimmed(values: &[f64], fraction: f64) -> (f64, f64, usize) {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = (fraction * v.len() as f64).floor() as usize;
    let kept = &v[cut..v.len() - cut];
    let n = kept.len();
    let mean = kept.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    (mean, (var / n as f64).sqrt(), n)
}

/// Runs every `(m, trial)` task and aggregates; deterministic given `cfg`.
pub fn run_rate_experiment(cfg: &ExperimentConfig) -> anyhow::Result<RateRun> {
    cfg.validate()?;
    cfg.validate_for_rates()?;
    let family = cfg.build_family()?;
    let family = &*family;
    let opts = cfg.erm_options();
    let proxy = optimal_target_proxy(
        &cfg.class,
        family,
        &cfg.problem,
        cfg.proxy_m(),
        cfg.n_mc,
        cfg.seed_for(Stream::Proxy),
        &opts,
    )
    .context("optimal-target proxy")?;
    let mc_seed = cfg.seed_for(Stream::MonteCarlo);

    let tasks: Vec<(usize, usize)> =
        cfg.m_grid.iter().flat_map(|&m| (0..cfg.trials_per_m).map(move |t| (m, t))).collect();
    let rows: Vec<TrialRow> = tasks
        .par_iter()
        .map(|&(m, trial)| {
            let seed = cfg.seed_for(Stream::Trial { m, trial });
            let run = || -> learnrec::Result<TrialRow> {
                let ts = draw_training_set(&cfg.problem, m, seed)?;
                let fit = erm_solve(&cfg.class, family, &ts, &opts)?;
                let mom = expected_losses_mc(
                    &cfg.problem,
                    &[&fit.theta_hat, &proxy.theta_star],
                    family,
                    cfg.n_mc,
                    mc_seed,
                )?;
                Ok(TrialRow {
                    m,
                    trial,
                    sample_error: mom.difference(0, 1).estimate.abs(),
                    emp_risk_hat: fit.objective_hat,
                    exp_loss_hat: mom.means[0],
                    exp_loss_star: mom.means[1],
                    erm_residual: fit.residual,
                    seed,
                    converged: fit.converged,
                    error: None,
                })
            };
            run().unwrap_or_else(|e| TrialRow {
                m,
                trial,
                sample_error: f64::NAN,
                emp_risk_hat: f64::NAN,
                exp_loss_hat: f64::NAN,
                exp_loss_star: f64::NAN,
                erm_residual: f64::NAN,
                seed,
                converged: false,
                error: Some(e.to_string()),
            })
        })
        .collect();

    let summary = summarize(cfg, family, proxy, &rows)?;
    Ok(RateRun { summary, rows })
}

fn summarize(
    cfg: &ExperimentConfig,
    family: &dyn Family<f64>,
    proxy: ProxyTarget,
    rows: &[TrialRow],
) -> anyhow::Result<RateSummary> {
    let tol = &cfg.tolerances;
    let mut notes = Vec::new();
    let certified = crate::verify::holder_stability(cfg, family).passed;
    if !certified {
        notes.push("stability certificate failed; the bound comparison is not backed by the assumptions".into());
    }
    let prediction = predicted_exponent(class_kind(&cfg.class), family.holder_exponent(), cfg.orlicz_order())?;
    let predicted = prediction.exponent;
    let band = [predicted - tol.slope_band, predicted + tol.slope_band];

    let failures = rows.iter().filter(|r| !r.converged).count();
    let per_m: Vec<PerM> = cfg
        .m_grid
        .iter()
        .map(|&m| {
            let here: Vec<&TrialRow> = rows.iter().filter(|r| r.m == m).collect();
            let values: Vec<f64> = here.iter().filter(|r| r.error.is_none()).map(|r| r.sample_error).collect();
            let failures = here.iter().filter(|r| !r.converged).count();
            if values.is_empty() {
                return PerM { m, mean: f64::NAN, stderr: f64::NAN, n: 0, untrimmed_mean: f64::NAN, failures };
            }
            let (mean, stderr, n) = trimmed(&values, tol.trim_fraction);
            let untrimmed_mean = values.iter().sum::<f64>() / values.len() as f64;
            PerM { m, mean, stderr, n, untrimmed_mean, failures }
        })
        .collect();

    let base = RateSummary {
        config_digest: cfg.digest(),
        theta_star: proxy.theta_star.clone(),
        per_m: per_m.clone(),
        slope: None,
        slope_ci: None,
        predicted_exponent: predicted,
        verdict: String::new(),
        prediction,
        band,
        fit: None,
        proxy,
        failures,
        trials: rows.len(),
        certified,
        domination: None,
        monotonicity: None,
        notes: Vec::new(),
    };

    if cfg.class.is_singleton() {
        notes.push("singleton class: the empirical and optimal targets coincide, slope fit skipped".into());
        return Ok(RateSummary { verdict: "degenerate".into(), notes, ..base });
    }
    if failures as f64 > tol.max_failure_fraction * rows.len() as f64 {
        let first = rows.iter().find_map(|r| r.error.clone());
        notes.push(format!(
            "{failures} of {} ERM runs did not converge (limit {:.0}%){}",
            rows.len(),
            100.0 * tol.max_failure_fraction,
            first.map(|e| format!("; first error: {e}")).unwrap_or_default()
        ));
        return Ok(RateSummary { verdict: "invalid".into(), notes, ..base });
    }

    let usable: Vec<&PerM> = per_m.iter().filter(|p| p.mean > 0.0 && p.mean.is_finite()).collect();
    if usable.len() < per_m.len() {
        notes.push(format!("{} grid points with non-positive mean excluded from the fit", per_m.len() - usable.len()));
    }
    let fit = if usable.len() >= 4 {
        let ms: Vec<f64> = usable.iter().map(|p| p.m as f64).collect();
        let ys: Vec<f64> = usable.iter().map(|p| p.mean).collect();
        let se: Vec<f64> = usable.iter().map(|p| p.stderr).collect();
        Some(loglog_fit(&ms, &ys, Some(&se))?)
    } else {
        None
    };

    let monotonicity = {
        let violations: Vec<[usize; 2]> = per_m
            .windows(2)
            .filter(|w| w[1].mean - w[0].mean > 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt())
            .map(|w| [w[0].m, w[1].m])
            .collect();
        Monotonicity { passed: violations.is_empty(), violations }
    };

    let cov = cfg.class.covering_model();
    let bound: Vec<f64> = cfg
        .m_grid
        .iter()
        .map(|&m| -> anyhow::Result<f64> {
            let inputs = bound_inputs(cfg, family, m)?;
            Ok(chaining_bound_scan(&inputs, &cov)?.min_value)
        })
        .collect::<anyhow::Result<_>>()?;
    let domination = (per_m[0].mean > 0.0 && bound[0] > 0.0).then(|| {
        let calibration = per_m[0].mean / bound[0];
        let ratios: Vec<f64> = per_m.iter().zip(&bound).map(|(p, b)| p.mean / (calibration * b)).collect();
        let passed = ratios[1..].iter().all(|&r| r <= 1.0);
        Domination { calibration, bound: bound.clone(), ratios, passed }
    });
    if domination.is_none() {
        notes.push("bound calibration skipped: non-positive mean or bound at the smallest m".into());
    }

    let verdict = match &fit {
        Some(f) if (band[0]..=band[1]).contains(&f.slope) => "consistent",
        Some(_) => "inconsistent",
        None => "insufficient",
    };
    Ok(RateSummary {
        slope: fit.as_ref().map(|f| f.slope),
        slope_ci: fit.as_ref().map(|f| f.slope_ci),
        verdict: verdict.into(),
        fit,
        domination,
        monotonicity: Some(monotonicity),
        notes,
        ..base
    })
}

pub fn rows_to_csv(rows: &[TrialRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.m, r.trial, r.sample_error, r.emp_risk_hat, r.exp_loss_hat, r.exp_loss_star, r.erm_residual, r.seed
        );
    }
    out
}

/// Writes `rates.csv`, `summary.json` and the effective `config.json`.
pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, run: &RateRun) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("rates.csv"), rows_to_csv(&run.rows))?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&run.summary)? + "\n")?;
    std::fs::write(dir.join("config.json"), cfg.canonical_text() + "\n")?;
    Ok(())
}
