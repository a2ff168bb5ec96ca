use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::json;

use learnrec::risk::{empirical_risk, erm_solve, expected_loss_mc};
use learnrec::stochastics::draw_training_set;
use learnrec_lab::bounds_eval::evaluate_bounds;
use learnrec_lab::config::{ExperimentConfig, Stream};
use learnrec_lab::experiment::{run_rate_experiment, write_artifacts};
use learnrec_lab::verify::run_verification_suite;

#[derive(Parser)]
#[command(name = "learnrec", version, about = "Sample-error experiments for learned reconstruction maps")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a training set and write it as CSV.
    Generate {
        #[arg(long)]
        m: usize,
    },
    /// Fit one training set and report the parameter and its risks.
    Erm {
        #[arg(long)]
        m: usize,
    },
    /// Check the assumptions behind the bounds; exit code 3 if any fails.
    Verify,
    /// Run the sample-error rate experiment.
    Rates,
    /// Evaluate covering and chaining bounds over `m_grid`.
    Bounds,
}

fn load(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let path = cli.config.as_deref().context("--config <path> is required")?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> anyhow::Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty(value: &impl serde::Serialize) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let cfg = load(cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Generate { m } => {
            let ts = draw_training_set(&cfg.problem, *m, cfg.seed_for(Stream::Trial { m: *m, trial: 0 }))?;
            let mut buf = Vec::new();
            ts.write_csv(&mut buf)?;
            emit(out, "training.csv", std::str::from_utf8(&buf)?)?;
        }
        Command::Erm { m } => {
            let family = cfg.build_family()?;
            let seed = cfg.seed_for(Stream::Trial { m: *m, trial: 0 });
            let ts = draw_training_set(&cfg.problem, *m, seed)?;
            let fit = erm_solve(&cfg.class, &*family, &ts, &cfg.erm_options())?;
            let empirical = empirical_risk(&ts, &fit.theta_hat, &*family)?;
            let expected = expected_loss_mc(&cfg.problem, &fit.theta_hat, &*family, cfg.n_mc, cfg.seed_for(Stream::MonteCarlo))?;
            let report = json!({
                "config_digest": cfg.digest(),
                "m": m,
                "seed": seed,
                "theta_hat": fit.theta_hat,
                "empirical_risk": empirical,
                "expected_loss": expected,
                "erm_residual": fit.residual,
                "converged": fit.converged,
            });
            emit(out, "erm.json", &pretty(&report)?)?;
        }
        Command::Verify => {
            let report = run_verification_suite(&cfg);
            emit(out, "verify.json", &pretty(&report)?)?;
            for c in &report.checks {
                eprintln!("{:<20} {}", c.assumption, if c.passed { "pass" } else { "FAIL" });
            }
            return Ok(ExitCode::from(report.exit_code() as u8));
        }
        Command::Rates => {
            let run = run_rate_experiment(&cfg)?;
            match out {
                Some(dir) => write_artifacts(dir, &cfg, &run)?,
                None => emit(None, "", &pretty(&run.summary)?)?,
            }
            let s = &run.summary;
            eprintln!(
                "slope {} predicted {:.4} verdict {}",
                s.slope.map_or("n/a".to_string(), |v| format!("{v:.4}")),
                s.predicted_exponent,
                s.verdict
            );
        }
        Command::Bounds => {
            let report = evaluate_bounds(&cfg)?;
            emit(out, "bounds.json", &pretty(&report)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
