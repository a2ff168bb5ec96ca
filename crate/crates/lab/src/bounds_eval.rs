//! Covering and chaining bounds over the configured sample sizes.

use serde::{Deserialize, Serialize};

use learnrec::bounds::{chaining_bound_scan, covering_bound_scan, BoundEvaluation};

use crate::config::ExperimentConfig;
use crate::experiment::bound_inputs;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsAtM {
    pub m: usize,
    pub covering: BoundEvaluation<f64>,
    pub chaining: BoundEvaluation<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub config_digest: String,
    pub per_m: Vec<BoundsAtM>,
}

pub fn evaluate_bounds(cfg: &ExperimentConfig) -> anyhow::Result<BoundsReport> {
    if cfg.m_grid.is_empty() {
        anyhow::bail!("m_grid required");
    }
    let family = cfg.build_family()?;
    let cov = cfg.class.covering_model();
    let per_m = cfg
        .m_grid
        .iter()
        .map(|&m| -> anyhow::Result<BoundsAtM> {
            let inputs = bound_inputs(cfg, &*family, m)?;
            Ok(BoundsAtM { m, covering: covering_bound_scan(&inputs, &cov)?, chaining: chaining_bound_scan(&inputs, &cov)? })
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(BoundsReport { config_digest: cfg.digest(), per_m })
}
