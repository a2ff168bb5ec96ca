//! Experiment configuration: JSON schema, validation, family construction
//! and the config digest.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use learnrec::hypotheses::{
    ElasticNetFamily, Family, FixedPointArch, FixedPointFamily, PenaltyLayout, TikhonovFamily, ZeroFamily,
};
use learnrec::risk::ErmOptions;
use learnrec::seed::derive;
use learnrec::stochastics::OrliczOrder;
use learnrec::{ParamClass, ProblemDistribution};

/// Data-fit weighting of the Tikhonov family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Inverse noise covariance; falls back to the identity when the noise
    /// is not Gaussian.
    #[default]
    Noise,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Tikhonov {
        layout: PenaltyLayout<f64>,
        #[serde(default)]
        weight: Weighting,
    },
    ElasticNet {
        layout: PenaltyLayout<f64>,
        alpha: f64,
        eta: f64,
        #[serde(default = "default_solver_tol")]
        tol: f64,
    },
    FixedPoint {
        arch: FixedPointArch<f64>,
        contraction_budget: f64,
        #[serde(default = "default_solver_tol")]
        tol: f64,
    },
    /// `R_theta = 0`; `param_dim` free parameters that are ignored.
    Zero { param_dim: usize },
}

fn default_solver_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub erm_tol: f64,
    pub erm_starts: usize,
    pub erm_max_iter: usize,
    /// Largest admissible fraction of non-converged ERM runs.
    pub max_failure_fraction: f64,
    /// Half-width of the slope acceptance band around the predicted exponent.
    pub slope_band: f64,
    /// Fraction dropped at each end before averaging sample errors.
    pub trim_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            erm_tol: 1e-7,
            erm_starts: 8,
            erm_max_iter: 5000,
            max_failure_fraction: 0.05,
            slope_band: 0.15,
            trim_fraction: 0.02,
        }
    }
}

/// Constants of the theoretical bounds. Only the shape in `m` is compared
/// with experiments, so the defaults are placeholders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSettings {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "M_l")]
    pub m_loss: f64,
    /// Orlicz order; defaults to 1 for Gaussian data and 2 for bounded data.
    pub q: Option<OrliczOrder>,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
}

impl Default for BoundSettings {
    fn default() -> Self {
        Self { k: 1.0, m_loss: 1.0, q: None, c: 1.0, c1: 1.0, c2: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemDistribution,
    pub family: FamilySpec,
    pub class: ParamClass,
    #[serde(default)]
    pub m_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials_per_m: usize,
    /// Defaults to `100 * max(m_grid)`.
    #[serde(default)]
    pub proxy_m: Option<usize>,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub bounds: BoundSettings,
}

fn default_trials() -> usize {
    50
}

fn default_n_mc() -> usize {
    100_000
}

impl ExperimentConfig {
    /// Parses JSON text; errors name the first offending path.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("invalid config at `{path}`: {}", e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            bail!("m_grid must be strictly increasing");
        }
        if self.m_grid.first() == Some(&0) {
            bail!("m_grid entries must be positive");
        }
        if self.n_mc < 100 {
            bail!("n_mc must be at least 100");
        }
        if self.trials_per_m == 0 {
            bail!("trials_per_m must be positive");
        }
        if let (Some(p), Some(&max)) = (self.proxy_m, self.m_grid.last()) {
            if p < 100 * max {
                bail!("proxy_m = {p} is below 100 * max(m_grid) = {}", 100 * max);
            }
        }
        let t = &self.tolerances;
        if !(t.erm_tol > 0.0) || t.erm_starts == 0 || !(0.0..0.5).contains(&t.trim_fraction) {
            bail!("tolerances: erm_tol > 0, erm_starts >= 1 and trim_fraction in [0, 0.5) required");
        }
        Ok(())
    }

    /// Rate experiments additionally need at least 4 grid points and 10 trials.
    pub fn validate_for_rates(&self) -> anyhow::Result<()> {
        if self.m_grid.is_empty() {
            bail!("m_grid required");
        }
        if self.m_grid.len() < 4 {
            bail!("rate fits need at least 4 values in m_grid");
        }
        if self.trials_per_m < 10 {
            bail!("rate fits need trials_per_m >= 10");
        }
        Ok(())
    }

    pub fn proxy_m(&self) -> usize {
        self.proxy_m.unwrap_or_else(|| 100 * self.m_grid.last().copied().unwrap_or(1000))
    }

    pub fn build_family(&self) -> anyhow::Result<Box<dyn Family<f64>>> {
        let a = self.problem.forward();
        let family: Box<dyn Family<f64>> = match &self.family {
            FamilySpec::Tikhonov { layout, weight } => {
                let layout = PenaltyLayout::new(layout.n, layout.h.clone(), layout.b.clone())?;
                match (weight, self.problem.noise().as_gaussian()) {
                    (Weighting::Noise, Some(noise)) => Box::new(TikhonovFamily::new(a, noise, layout)?),
                    _ => Box::new(TikhonovFamily::unweighted(a, layout)?),
                }
            }
            FamilySpec::ElasticNet { layout, alpha, eta, tol } => {
                let layout = PenaltyLayout::new(layout.n, layout.h.clone(), layout.b.clone())?;
                Box::new(ElasticNetFamily::new(a, layout, *alpha, *eta, *tol)?)
            }
            FamilySpec::FixedPoint { arch, contraction_budget, tol } => {
                Box::new(FixedPointFamily::new(a.clone(), arch.clone(), *contraction_budget, *tol)?)
            }
            FamilySpec::Zero { param_dim } => Box::new(ZeroFamily { param_dim: *param_dim, output_dim: a.n_x() }),
        };
        if family.param_dim() != self.class.dim() {
            bail!(
                "class dimension {} does not match the {} family's parameter dimension {}",
                self.class.dim(),
                family.name(),
                family.param_dim()
            );
        }
        Ok(family)
    }

    pub fn erm_options(&self) -> ErmOptions {
        let t = &self.tolerances;
        ErmOptions {
            starts: t.erm_starts,
            tol: t.erm_tol,
            max_iter: t.erm_max_iter,
            seed: self.seed_for(Stream::ErmStarts),
            ..ErmOptions::default()
        }
    }

    pub fn orlicz_order(&self) -> OrliczOrder {
        self.bounds.q.unwrap_or(if self.problem.is_gaussian() {
            OrliczOrder::SubExponential
        } else {
            OrliczOrder::SubGaussian
        })
    }

    pub fn seed_for(&self, stream: Stream) -> u64 {
        match stream {
            Stream::Proxy => derive(self.master_seed, &[0x7072_6f78]),
            Stream::MonteCarlo => derive(self.master_seed, &[0x6d63]),
            Stream::ErmStarts => derive(self.master_seed, &[0x0065_726d]),
            Stream::Probes => derive(self.master_seed, &[0x7072_6f62]),
            Stream::Trial { m, trial } => derive(self.master_seed, &[m as u64, trial as u64]),
        }
    }

    /// Compact JSON with sorted keys.
    pub fn canonical_text(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// 64-bit FNV-1a of [`Self::canonical_text`], as 16 hex digits.
    pub fn digest(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_text().as_bytes()))
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Proxy,
    MonteCarlo,
    ErmStarts,
    Probes,
    Trial { m: usize, trial: usize },
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// The scalar Gaussian model `y = x + e`, `x, e ~ N(0, 1)`, with the
/// one-parameter shrinkage family `R_b(y) = y / (1 + 2 b^2)`, `b in [0, 2]`.
pub fn scalar_gaussian_config(m_grid: Vec<usize>, trials_per_m: usize, master_seed: u64) -> ExperimentConfig {
    use learnrec::operators::{ForwardOperator, GaussianSpec};
    let problem = ProblemDistribution::gaussian(
        ForwardOperator::identity(1),
        GaussianSpec::centered(vec![1.0]).expect("valid"),
        GaussianSpec::centered(vec![1.0]).expect("valid"),
    )
    .expect("valid");
    ExperimentConfig {
        problem,
        family: FamilySpec::Tikhonov { layout: PenaltyLayout::scalar_shrinkage(1), weight: Weighting::Noise },
        class: ParamClass::boxed(vec![0.0], vec![2.0]).expect("valid"),
        m_grid,
        trials_per_m,
        proxy_m: None,
        n_mc: 100_000,
        master_seed,
        tolerances: Tolerances::default(),
        bounds: BoundSettings::default(),
    }
}
