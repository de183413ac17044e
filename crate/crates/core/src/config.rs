//! TOML run configuration for the command-line front end.
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::algorithms::{McemControl, SamplerControl};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub constants: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub inits: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub mcem: McemSection,
    #[serde(default, rename = "is")]
    pub importance: IsSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub niter: usize,
    pub burnin: usize,
    pub thin: usize,
    /// Variables to record; defaults to those holding top-level nodes.
    pub monitors: Option<Vec<String>>,
    pub max_lag: usize,
    pub samplers: Vec<SamplerOverride>,
}

impl Default for McmcSection {
    fn default() -> Self {
        McmcSection {
            niter: 10_000,
            burnin: 1_000,
            thin: 1,
            monitors: None,
            max_lag: 50,
            samplers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverrideAction {
    Add,
    Remove,
}

/// Adds a sampler on `targets`, or removes every sampler acting on them.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerOverride {
    pub action: OverrideAction,
    #[serde(default)]
    pub kind: Option<String>,
    pub targets: Vec<String>,
    pub scale: Option<f64>,
    pub adaptive: Option<bool>,
    pub adapt_interval: Option<usize>,
    pub target_acceptance: Option<f64>,
}

impl SamplerOverride {
    pub fn control(&self) -> SamplerControl {
        let d = SamplerControl::default();
        SamplerControl {
            scale: self.scale.unwrap_or(d.scale),
            adaptive: self.adaptive.unwrap_or(d.adaptive),
            adapt_interval: self.adapt_interval.unwrap_or(d.adapt_interval),
            target_acceptance: self.target_acceptance,
            proposal_cov: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McemSection {
    pub tol: f64,
    pub stable_iterations: usize,
    pub max_iter: usize,
    pub m_initial: usize,
    pub growth: f64,
    pub m_max: usize,
    pub burnin_fraction: f64,
    pub thin: usize,
    pub optimizer_evals: usize,
    pub latent: Option<Vec<String>>,
    pub params: Option<Vec<String>>,
}

impl Default for McemSection {
    fn default() -> Self {
        let c = McemControl::default();
        McemSection {
            tol: c.tol,
            stable_iterations: c.stable_iterations,
            max_iter: c.max_iter,
            m_initial: c.m_initial,
            growth: c.growth,
            m_max: c.m_max,
            burnin_fraction: c.burnin_fraction,
            thin: c.thin,
            optimizer_evals: c.optimizer_evals,
            latent: None,
            params: None,
        }
    }
}

impl McemSection {
    pub fn control(&self) -> McemControl {
        McemControl {
            tol: self.tol,
            stable_iterations: self.stable_iterations,
            max_iter: self.max_iter,
            m_initial: self.m_initial,
            growth: self.growth,
            m_max: self.m_max,
            burnin_fraction: self.burnin_fraction,
            thin: self.thin,
            optimizer_evals: self.optimizer_evals,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsSection {
    pub sample_nodes: Vec<String>,
    pub m: usize,
    /// Only `prior` is supported.
    pub proposal: String,
}

impl Default for IsSection {
    fn default() -> Self {
        IsSection {
            sample_nodes: Vec::new(),
            m: 10_000,
            proposal: "prior".into(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves its paths relative to it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg =
            Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.model,
            &mut cfg.constants,
            &mut cfg.data,
            &mut cfg.inits,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
