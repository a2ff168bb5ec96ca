//! Checks that a configured problem satisfies the assumptions behind the
//! sample-error bounds.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use learnrec::hypotheses::{certify_stability, check_g_hypotheses, sample_probe_pairs, ElasticNetFamily, Family, PenaltyLayout};
use learnrec::linalg::norm;
use learnrec::risk::loss;
use learnrec::seed::{derive, substream};
use learnrec::stochastics::{empirical_average_contraction, orlicz_norm, tail_check};

use crate::config::{ExperimentConfig, FamilySpec, Stream};

const PROBE_YS: usize = 40;
const PROBE_PAIRS: usize = 50;
const DATA_SAMPLES: usize = 20_000;
const CONTRACTION_GRID: [usize; 5] = [16, 32, 64, 128, 256];
const CONTRACTION_TRIALS: usize = 200;
const CENTERING_SAMPLES: usize = 50_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub assumption: String,
    pub passed: bool,
    pub detail: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub config_digest: String,
    pub q: u8,
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

impl VerificationReport {
    /// Process exit code: 0 when every check passed, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_passed {
            0
        } else {
            3
        }
    }
}

fn check(name: &str, passed: bool, detail: Value) -> CheckResult {
    CheckResult { assumption: name.into(), passed, detail }
}

fn failed(name: &str, err: impl std::fmt::Display) -> CheckResult {
    check(name, false, json!({ "error": err.to_string() }))
}

fn compact_class(cfg: &ExperimentConfig) -> CheckResult {
    let class = &cfg.class;
    let diameter = class.diameter();
    let mut rng = substream(cfg.seed_for(Stream::Probes), 0);
    let mut contained = class.contains(&class.center());
    let mut idempotent = true;
    for _ in 0..100 {
        let t = class.sample(&mut rng);
        contained &= class.contains(&t);
        match class.project(&t) {
            Ok(p) => idempotent &= p.iter().zip(&t).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs())),
            Err(e) => return failed("compact_class", e),
        }
    }
    let passed = diameter.is_finite() && contained && idempotent;
    check(
        "compact_class",
        passed,
        json!({ "diameter": diameter, "samples_contained": contained, "projection_idempotent": idempotent }),
    )
}

pub(crate) fn holder_stability(cfg: &ExperimentConfig, family: &dyn Family<f64>) -> CheckResult {
    let seed = cfg.seed_for(Stream::Probes);
    let mut rng = substream(seed, 1);
    let ys: Vec<Vec<f64>> = (0..PROBE_YS).map(|_| cfg.problem.sample_pair(&mut rng).1).collect();
    let pairs = match sample_probe_pairs(&cfg.class, PROBE_PAIRS, cfg.class.diameter(), &mut substream(seed, 2)) {
        Ok(p) => p,
        Err(e) => return failed("holder_stability", e),
    };
    match certify_stability(family, &cfg.class, &ys, &pairs) {
        Ok(cert) => {
            let analytic_ok = cert.analytic.as_ref().is_none_or(|a| a.passed);
            let norm_ok = cert.norm_bound.as_ref().is_none_or(|n| n.derived_violations == 0);
            let finite = [cert.l_r, cert.l_r_prime, cert.m_r, cert.m_r_prime].iter().all(|v| v.is_finite());
            let detail = serde_json::to_value(&cert).expect("certificate serializes");
            check("holder_stability", analytic_ok && norm_ok && finite, detail)
        }
        Err(e) => failed("holder_stability", e),
    }
}

fn orlicz_data(cfg: &ExperimentConfig) -> CheckResult {
    let q = cfg.orlicz_order();
    let seed = cfg.seed_for(Stream::Probes);
    let draw = |stream: u64| -> (Vec<f64>, Vec<f64>) {
        let mut rng = substream(seed, stream);
        (0..DATA_SAMPLES)
            .map(|_| {
                let (x, y) = cfg.problem.sample_pair(&mut rng);
                (norm(&x).powi(2), norm(&y).powi(2))
            })
            .unzip()
    };
    let (fit_x, fit_y) = draw(3);
    let (test_x, test_y) = draw(4);
    let mut passed = true;
    let mut detail = serde_json::Map::new();
    for (name, fit, test) in [("x_sq", &fit_x, &test_x), ("y_sq", &fit_y, &test_y)] {
        let est = match orlicz_norm(fit, q) {
            Ok(e) => e,
            Err(e) => return failed("orlicz_data", e),
        };
        if est.norm_estimate == 0.0 {
            detail.insert(name.into(), json!({ "norm": 0.0, "tail_passed": true }));
            continue;
        }
        // the tail bound is checked on fresh draws at the upper end of the estimate
        let k = est.norm_estimate + est.confidence_halfwidth;
        let tail = match tail_check(test, k, q) {
            Ok(t) => t,
            Err(e) => return failed("orlicz_data", e),
        };
        passed &= tail.passed && est.norm_estimate.is_finite();
        detail.insert(
            name.into(),
            json!({ "norm": est.norm_estimate, "halfwidth": est.confidence_halfwidth, "tail_passed": tail.passed }),
        );
    }
    detail.insert("q".into(), json!(q.q() as u8));
    check("orlicz_data", passed, Value::Object(detail))
}

fn orlicz_increments(cfg: &ExperimentConfig, family: &dyn Family<f64>) -> CheckResult {
    let q = cfg.orlicz_order();
    let seed = derive(cfg.seed_for(Stream::Probes), &[5]);
    let a = cfg.class.center();
    let b = cfg.class.sample(&mut substream(seed, 0));
    let increment = |rng: &mut learnrec::seed::Rng| -> learnrec::Result<f64> {
        let (x, y) = cfg.problem.sample_pair(rng);
        Ok(loss(family, &a, &x, &y)? - loss(family, &b, &x, &y)?)
    };
    let mut rng = substream(seed, 1);
    let mut sum = 0.0;
    for _ in 0..CENTERING_SAMPLES {
        match increment(&mut rng) {
            Ok(v) => sum += v,
            Err(e) => return failed("orlicz_increments", e),
        }
    }
    let mean = sum / CENTERING_SAMPLES as f64;
    let sampler = |rng: &mut learnrec::seed::Rng| increment(rng).map(|v| v - mean).unwrap_or(f64::NAN);
    let table = match empirical_average_contraction(sampler, q, &CONTRACTION_GRID, CONTRACTION_TRIALS, derive(seed, &[2])) {
        Ok(t) => t,
        Err(e) => return failed("orlicz_increments", e),
    };
    let band = [-0.5 - cfg.tolerances.slope_band, -0.5 + cfg.tolerances.slope_band];
    let (passed, note) = match &table.fit {
        _ if table.single_norm == 0.0 => (true, "increments vanish identically"),
        Some(f) => ((band[0]..=band[1]).contains(&f.slope), "slope of the averaged norm against m"),
        None => (false, "no slope could be fitted"),
    };
    check(
        "orlicz_increments",
        passed,
        json!({
            "note": note,
            "band": band,
            "theta": [a, b],
            "centering_mean": mean,
            "table": serde_json::to_value(&table).expect("table serializes"),
        }),
    )
}

fn g_hypotheses(cfg: &ExperimentConfig, layout: &PenaltyLayout<f64>, alpha: f64, eta: f64, tol: f64) -> CheckResult {
    let run = || -> learnrec::Result<CheckResult> {
        let layout = PenaltyLayout::new(layout.n, layout.h.clone(), layout.b.clone())?;
        let fam = ElasticNetFamily::new(cfg.problem.forward(), layout, alpha, eta, tol)?;
        let seed = derive(cfg.seed_for(Stream::Probes), &[6]);
        let p = fam.params(&cfg.class.center())?;
        let mut rng = substream(seed, 0);
        // g acts on reconstructions, so it is probed at prior draws
        let xs: Vec<Vec<f64>> = (0..PROBE_YS).map(|_| cfg.problem.sample_pair(&mut rng).0).collect();
        let alternatives = (0..10)
            .map(|_| fam.params(&cfg.class.sample(&mut rng)).map(|q| (q.h, q.b)))
            .collect::<learnrec::Result<Vec<_>>>()?;
        let report = check_g_hypotheses(&p.b, &p.h, alpha, &xs, &alternatives)?;
        let passed = report.nonnegative && report.convex.unwrap_or(true) && report.c_g.is_none_or(f64::is_finite);
        Ok(check("g_hypotheses", passed, serde_json::to_value(&report).expect("report serializes")))
    };
    run().unwrap_or_else(|e| failed("g_hypotheses", e))
}

/// Runs every applicable check. A family that cannot be built (for example a
/// fixed-point map with contraction budget at or above 1) is reported as a
/// failed stability check rather than an error.
pub fn run_verification_suite(cfg: &ExperimentConfig) -> VerificationReport {
    let mut checks = vec![compact_class(cfg)];
    match cfg.build_family() {
        Ok(family) => {
            checks.push(holder_stability(cfg, &*family));
            checks.push(orlicz_data(cfg));
            checks.push(orlicz_increments(cfg, &*family));
        }
        Err(e) => {
            checks.push(failed("holder_stability", format!("{e:#}")));
            checks.push(orlicz_data(cfg));
        }
    }
    if let FamilySpec::ElasticNet { layout, alpha, eta, tol } = &cfg.family {
        checks.push(g_hypotheses(cfg, layout, *alpha, *eta, *tol));
    }
    let all_passed = checks.iter().all(|c| c.passed);
    VerificationReport { config_digest: cfg.digest(), q: cfg.orlicz_order().q() as u8, checks, all_passed }
}
