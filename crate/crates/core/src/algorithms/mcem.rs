use std::collections::BTreeMap;

use crate::distributions::Support;
use crate::error::{Error, Result};
use crate::graph::{DependencyOptions, NodeFilter, NodeId};
use crate::runtime::Model;

use super::mcmc::{Mcmc, McmcConfiguration};
use super::optim::{nelder_mead, NelderMeadOptions};
use super::samplers::{SamplerControl, SamplerKind};

#[derive(Debug, Clone, PartialEq)]
pub struct McemControl {
    /// Convergence threshold on the max-norm change of the estimates.
    pub tol: f64,
    /// Number of consecutive iterations that must stay below `tol`.
    pub stable_iterations: usize,
    pub max_iter: usize,
    /// Sample size schedule: `m_initial * ceil(growth^(t-1))`, capped.
    pub m_initial: usize,
    pub growth: f64,
    pub m_max: usize,
    pub burnin_fraction: f64,
    /// MCMC iterations per retained latent sample.
    pub thin: usize,
    pub optimizer_evals: usize,
}

impl Default for McemControl {
    fn default() -> Self {
        McemControl {
            tol: 0.005,
            stable_iterations: 3,
            max_iter: 50,
            m_initial: 1000,
            growth: 1.5,
            m_max: 25_000,
            burnin_fraction: 0.1,
            thin: 3,
            optimizer_evals: 500,
        }
    }
}

impl McemControl {
    /// Latent sample size of iteration `t` (1-based).
    pub fn sample_size(&self, t: usize) -> usize {
        let factor = self.growth.powi(t as i32 - 1).ceil();
        ((self.m_initial as f64 * factor) as usize).min(self.m_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McemIteration {
    pub iteration: usize,
    pub samples: usize,
    pub estimates: Vec<f64>,
    /// Objective at the previous estimates, on this iteration's samples.
    pub q_previous: f64,
    /// Objective at the new estimates, on the same samples.
    pub q_new: f64,
    /// Monte Carlo standard error of `q_new - q_previous`.
    pub q_diff_mcse: f64,
    pub max_change: f64,
    pub optimizer_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McemResult {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<McemIteration>,
}

impl McemResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.estimates[i])
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.names
            .iter()
            .cloned()
            .zip(self.estimates.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Transform {
    Identity,
    Log,
    Logit,
}

impl Transform {
    fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Logit => (x / (1.0 - x)).ln(),
        }
    }

    fn inverse(self, y: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::Log => y.exp(),
            Transform::Logit => 1.0 / (1.0 + (-y).exp()),
        }
    }
}

/// Monte Carlo expectation maximization: MCMC over latent nodes with the
/// parameters fixed, then maximization of the averaged log probability.
#[derive(Debug)]
pub struct Mcem {
    mcmc: Mcmc,
    param_names: Vec<String>,
    param_elems: Vec<usize>,
    transforms: Vec<Transform>,
    /// Elements restored per latent sample: latent nodes and the
    /// deterministic nodes computed from them.
    sample_elems: Vec<usize>,
    /// Stochastic dependencies of the parameters, with the deterministic
    /// nodes between.
    objective_nodes: Vec<NodeId>,
    control: McemControl,
}

impl Mcem {
    /// `latent` defaults to the latent nodes and `params` to the top-level
    /// nodes.
    pub fn new(
        model: Model,
        latent: Option<&[NodeId]>,
        params: Option<&[NodeId]>,
        control: McemControl,
    ) -> Result<Self> {
        if control.thin == 0 || control.m_initial == 0 || control.stable_iterations == 0 {
            return Err(Error::InvalidArgument(
                "thin, m_initial and stable_iterations must be positive".into(),
            ));
        }
        let def = model.definition().clone();
        let latent = match latent {
            Some(l) => l.to_vec(),
            None => model.classify(&[NodeFilter::Latent]),
        };
        let params = match params {
            Some(p) => p.to_vec(),
            None => model.classify(&[NodeFilter::Top, NodeFilter::NonData]),
        };
        if params.is_empty() {
            return Err(Error::InvalidArgument("no parameter nodes".into()));
        }
        let mut transforms = Vec::new();
        let mut param_elems = Vec::new();
        for &p in &params {
            if p >= def.len() {
                return Err(Error::UnknownNode(format!("#{p}")));
            }
            let node = def.node(p);
            let dist = node.distribution().ok_or_else(|| {
                Error::InvalidArgument(format!("parameter `{}` is not stochastic", node.name))
            })?;
            if dist.spec().discrete || !node.is_scalar() || model.is_data(p) || latent.contains(&p)
            {
                return Err(Error::InvalidArgument(format!(
                    "parameter `{}` must be a continuous scalar non-data node outside the latent set",
                    node.name
                )));
            }
            transforms.push(match dist.spec().support {
                Support::Positive | Support::NonNegative => Transform::Log,
                Support::UnitInterval => Transform::Logit,
                _ => Transform::Identity,
            });
            param_elems.push(node.elems.start);
        }
        for &l in &latent {
            if l >= def.len() || !def.node(l).is_stochastic() || model.is_data(l) {
                return Err(Error::InvalidArgument(format!(
                    "latent node `{}` must be stochastic and not data",
                    if l < def.len() { def.node_name(l) } else { "?" }
                )));
            }
        }
        let objective_nodes = model.dependencies(
            &params,
            DependencyOptions {
                include_self: false,
                stochastic_only_terminal: false,
                ..Default::default()
            },
        )?;
        let mut sample_elems = Vec::new();
        let mut cfg = McmcConfiguration::empty(&model);
        if !latent.is_empty() {
            let mut sorted = latent.clone();
            sorted.sort_unstable();
            sorted.dedup();
            let carried = model.dependencies(
                &sorted,
                DependencyOptions {
                    deterministic_only: true,
                    stochastic_only_terminal: false,
                    ..Default::default()
                },
            )?;
            for n in carried {
                sample_elems.extend(def.node(n).elems.clone());
            }
            for &l in &sorted {
                let kind = if def.node(l).is_scalar() {
                    SamplerKind::RandomWalk
                } else {
                    SamplerKind::BlockRandomWalk
                };
                cfg.add_sampler_nodes(kind, vec![l], SamplerControl::default())?;
            }
        }
        let param_names = def.node_names(&params);
        Ok(Mcem {
            mcmc: Mcmc::new(model, &cfg)?,
            param_names,
            param_elems,
            transforms,
            sample_elems,
            objective_nodes,
            control,
        })
    }

    pub fn model(&self) -> &Model {
        self.mcmc.model()
    }

    pub fn into_model(self) -> Model {
        self.mcmc.into_model()
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.param_names
    }

    fn current_params(&self) -> Vec<f64> {
        self.param_elems
            .iter()
            .map(|&e| self.mcmc.model().values()[e])
            .collect()
    }

    /// Per-sample log probability of the objective nodes at `params`.
    fn per_sample(&mut self, samples: &[f64], params: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let model = self.mcmc.model_mut();
        for (&e, &v) in self.param_elems.iter().zip(params) {
            model.values[e] = v;
        }
        let width = self.sample_elems.len();
        if width == 0 {
            out.push(model.calculate(&self.objective_nodes));
            return;
        }
        for row in samples.chunks_exact(width) {
            for (&e, &v) in self.sample_elems.iter().zip(row) {
                model.values[e] = v;
            }
            out.push(model.calculate(&self.objective_nodes));
        }
    }

    fn objective(&mut self, samples: &[f64], params: &[f64]) -> f64 {
        let model = self.mcmc.model_mut();
        for (&e, &v) in self.param_elems.iter().zip(params) {
            model.values[e] = v;
        }
        let width = self.sample_elems.len();
        if width == 0 {
            return model.calculate(&self.objective_nodes);
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for row in samples.chunks_exact(width) {
            for (&e, &v) in self.sample_elems.iter().zip(row) {
                model.values[e] = v;
            }
            total += model.calculate(&self.objective_nodes);
            count += 1;
        }
        total / count as f64
    }

    /// Iterates until the estimates stabilize or `max_iter` is reached; the
    /// model is left at the final estimates.
    pub fn run(&mut self) -> Result<McemResult> {
        let c = self.control.clone();
        let mut theta = self.current_params();
        for (i, (&v, t)) in theta.iter().zip(&self.transforms).enumerate() {
            if !t.forward(v).is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "initial value {v} of `{}` is outside its support",
                    self.param_names[i]
                )));
            }
        }
        let width = self.sample_elems.len();
        let mut trace = Vec::new();
        let mut stable = 0;
        let mut converged = false;
        let mut samples: Vec<f64> = Vec::new();
        let (mut q_old, mut q_new) = (Vec::new(), Vec::new());
        for t in 1..=c.max_iter {
            self.set_params(&theta);
            let m = if width == 0 { 1 } else { c.sample_size(t) };
            samples.clear();
            if width > 0 {
                let burnin = (c.burnin_fraction * m as f64).round() as usize;
                let elems = &self.sample_elems;
                self.mcmc
                    .run_with(burnin + m * c.thin, burnin, c.thin, |model| {
                        samples.extend(elems.iter().map(|&e| model.values()[e]));
                    })?;
            }
            self.per_sample(&samples, &theta, &mut q_old);
            let start: Vec<f64> = theta
                .iter()
                .zip(&self.transforms)
                .map(|(&v, t)| t.forward(v))
                .collect();
            let transforms = self.transforms.clone();
            let min = nelder_mead(
                |y| {
                    let p: Vec<f64> = y
                        .iter()
                        .zip(&transforms)
                        .map(|(&v, t)| t.inverse(v))
                        .collect();
                    -self.objective(&samples, &p)
                },
                &start,
                NelderMeadOptions {
                    max_evals: c.optimizer_evals,
                    ..Default::default()
                },
            );
            let next: Vec<f64> = min
                .x
                .iter()
                .zip(&self.transforms)
                .map(|(&v, t)| t.inverse(v))
                .collect();
            self.per_sample(&samples, &next, &mut q_new);
            let n = q_new.len() as f64;
            let diffs: Vec<f64> = q_new.iter().zip(&q_old).map(|(a, b)| a - b).collect();
            let mean_diff = diffs.iter().sum::<f64>() / n;
            let mcse = if diffs.len() > 1 {
                (diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                    / n.sqrt()
            } else {
                0.0
            };
            let max_change = next
                .iter()
                .zip(&theta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            trace.push(McemIteration {
                iteration: t,
                samples: m,
                estimates: next.clone(),
                q_previous: q_old.iter().sum::<f64>() / n,
                q_new: q_new.iter().sum::<f64>() / n,
                q_diff_mcse: mcse,
                max_change,
                optimizer_evals: min.evals,
            });
            theta = next;
            stable = if max_change < c.tol { stable + 1 } else { 0 };
            if stable >= c.stable_iterations {
                converged = true;
                break;
            }
        }
        self.set_params(&theta);
        Ok(McemResult {
            names: self.param_names.clone(),
            estimates: theta,
            converged,
            iterations: trace.len(),
            trace,
        })
    }

    /// Writes parameter values and resynchronizes the latent sampler.
    fn set_params(&mut self, params: &[f64]) {
        let model = self.mcmc.model_mut();
        for (&e, &v) in self.param_elems.iter().zip(params) {
            model.values[e] = v;
        }
        self.mcmc.sync();
    }
}
