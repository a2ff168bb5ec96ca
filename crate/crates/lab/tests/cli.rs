use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_learnrec"))
}

fn base_config() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/scalar_gaussian.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_rates_config() -> Value {
    let mut cfg = base_config();
    cfg["m_grid"] = json!([8, 16, 32, 64]);
    cfg["trials_per_m"] = json!(10);
    cfg["n_mc"] = json!(2000);
    cfg
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn rates_writes_artifacts_and_replays_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &small_rates_config());
    let run1 = dir.path().join("run1");
    let o = run(&["rates", "--config", path_str(&cfg), "--out", path_str(&run1), "--seed", "99"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(run1.join("rates.csv")).unwrap();
    assert!(csv.starts_with("m,trial,sample_error,emp_risk_hat,exp_loss_hat,exp_loss_star,erm_residual,seed\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 10);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(run1.join("summary.json")).unwrap()).unwrap();
    for key in ["config_digest", "theta_star", "per_m", "slope", "slope_ci", "predicted_exponent", "verdict"] {
        assert!(summary.get(key).is_some(), "summary.json lacks {key}");
    }
    for p in summary["per_m"].as_array().unwrap() {
        for key in ["m", "mean", "stderr", "n"] {
            assert!(p.get(key).is_some());
        }
    }

    // the stored config already carries the overridden seed
    let run2 = dir.path().join("run2");
    let o = run(&["rates", "--config", path_str(&run1.join("config.json")), "--out", path_str(&run2)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["rates.csv", "summary.json", "config.json"] {
        assert_eq!(std::fs::read(run1.join(f)).unwrap(), std::fs::read(run2.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn thread_count_changes_no_output_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &small_rates_config());
    let outs: Vec<PathBuf> = ["1", "3"]
        .iter()
        .map(|t| {
            let out = dir.path().join(format!("t{t}"));
            let o = run(&["rates", "--config", path_str(&cfg), "--out", path_str(&out), "--threads", t]);
            assert!(o.status.success(), "{}", stderr(&o));
            out
        })
        .collect();
    for f in ["rates.csv", "summary.json"] {
        assert_eq!(std::fs::read(outs[0].join(f)).unwrap(), std::fs::read(outs[1].join(f)).unwrap());
    }
}

#[test]
fn seed_flag_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &base_config());
    let a = run(&["generate", "--m", "5", "--config", path_str(&cfg), "--seed", "1"]);
    let b = run(&["generate", "--m", "5", "--config", path_str(&cfg), "--seed", "2"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 6);
}

#[test]
fn bounds_without_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg.as_object_mut().unwrap().remove("m_grid");
    let cfg = write_config(dir.path(), "cfg.json", &cfg);
    let o = run(&["bounds", "--config", path_str(&cfg)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("m_grid required"), "{}", stderr(&o));
}

#[test]
fn bounds_emits_scans() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &small_rates_config());
    let o = run(&["bounds", "--config", path_str(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let per_m = v["per_m"].as_array().unwrap();
    assert_eq!(per_m.len(), 4);
    for key in ["inputs", "r_grid", "values", "argmin_r", "min_value"] {
        assert!(per_m[0]["chaining"].get(key).is_some(), "missing {key}");
    }
    let mins: Vec<f64> = per_m.iter().map(|p| p["chaining"]["min_value"].as_f64().unwrap()).collect();
    assert!(mins.windows(2).all(|w| w[1] <= w[0]));
}

fn verify(cfg: &Value) -> (i32, Value) {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "cfg.json", cfg);
    let o = run(&["verify", "--config", path_str(&path)]);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap_or_else(|_| panic!("{}", stderr(&o)));
    (o.status.code().unwrap(), report)
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"].as_array().unwrap().iter().find(|c| c["assumption"] == name).unwrap()
}

#[test]
fn verify_scalar_gaussian_passes_on_the_q1_route() {
    let (code, report) = verify(&base_config());
    assert_eq!(code, 0, "{report:#}");
    assert_eq!(report["q"], 1);
}

#[test]
fn verify_bounded_model_passes_on_the_q2_route() {
    let mut cfg = base_config();
    cfg["problem"]["prior"] = json!({ "kind": "bounded", "dim": 1, "radius": 1.0 });
    cfg["problem"]["noise"] = json!({ "kind": "bounded", "dim": 1, "radius": 0.5 });
    let (code, report) = verify(&cfg);
    assert_eq!(code, 0, "{report:#}");
    assert_eq!(report["q"], 2);
}

#[test]
fn verify_flags_a_non_contractive_fixed_point_map() {
    let mut cfg = base_config();
    cfg["family"] = json!({
        "kind": "fixed_point",
        "arch": { "mixer": "diagonal", "bias": false, "radius": 1.0 },
        "contraction_budget": 1.2
    });
    cfg["class"] = json!({ "kind": "euclidean_ball", "dimension": 1, "radius": 1.0 });
    let (code, report) = verify(&cfg);
    assert_eq!(code, 3);
    let c = check(&report, "holder_stability");
    assert_eq!(c["passed"], false);
    assert!(c["detail"]["error"].as_str().unwrap().contains("contraction"), "{c:#}");
}

#[test]
fn verify_elastic_net_runs_g_checks() {
    let mut cfg = base_config();
    cfg["family"] = json!({
        "kind": "elastic_net",
        "layout": { "n": 1, "h": "free", "b": { "learned": "scalar" } },
        "alpha": 1.0,
        "eta": 0.5
    });
    cfg["class"] = json!({ "kind": "box", "lower": [-1.0, 0.0], "upper": [1.0, 2.0] });
    let (code, report) = verify(&cfg);
    assert_eq!(code, 0, "{report:#}");
    assert_eq!(check(&report, "g_hypotheses")["passed"], true);
}

#[test]
fn malformed_config_names_the_offending_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["tolerances"]["erm_tol"] = json!("small");
    let path = write_config(dir.path(), "cfg.json", &cfg);
    let o = run(&["verify", "--config", path_str(&path)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("tolerances.erm_tol"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = run(&["fly"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = run(&["rates", "--bogus"]);
    assert!(!o.status.success());
}

#[test]
fn erm_reports_parameter_and_risks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &base_config());
    let o = run(&["erm", "--m", "200", "--config", path_str(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let b = v["theta_hat"][0].as_f64().unwrap();
    assert!((0.0..=2.0).contains(&b));
    assert!(v["empirical_risk"].as_f64().unwrap() > 0.0);
    assert!(v["expected_loss"]["estimate"].as_f64().unwrap() >= 0.24);
}
