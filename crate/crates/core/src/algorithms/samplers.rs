use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{DependencyOptions, NodeId};
use crate::runtime::{CopyPlan, Model, ModelValues};

use super::decide;

const SCALAR_TARGET: f64 = 0.44;
const BLOCK_TARGET: f64 = 0.234;
const COV_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    RandomWalk,
    BlockRandomWalk,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::RandomWalk => "RW",
            SamplerKind::BlockRandomWalk => "RW_block",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rw" | "random_walk" => Ok(SamplerKind::RandomWalk),
            "rw_block" | "block" => Ok(SamplerKind::BlockRandomWalk),
            _ => Err(Error::InvalidSampler(format!("unknown sampler kind `{s}`"))),
        }
    }
}

/// Tuning of a random-walk sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerControl {
    /// Initial proposal scale.
    pub scale: f64,
    pub adaptive: bool,
    pub adapt_interval: usize,
    /// Defaults to 0.44 for one dimension and 0.234 otherwise.
    pub target_acceptance: Option<f64>,
    /// Initial proposal covariance of a block sampler, row-major.
    pub proposal_cov: Option<Vec<f64>>,
}

impl Default for SamplerControl {
    fn default() -> Self {
        SamplerControl {
            scale: 1.0,
            adaptive: true,
            adapt_interval: 200,
            target_acceptance: None,
            proposal_cov: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationStep {
    /// Sampler iterations completed when the adaptation happened.
    pub iteration: u64,
    pub acceptance_rate: f64,
    /// Scale after the update.
    pub scale: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplerStats {
    pub proposals: u64,
    pub accepted: u64,
    /// Proposals rejected because the log ratio was NaN.
    pub nan_rejections: u64,
    pub scale: f64,
    pub history: Vec<AdaptationStep>,
}

impl SamplerStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// A specialized MCMC sampler. `state` must hold a synchronized copy of
/// the model's values and log probabilities on entry and holds one on exit.
pub trait Sampler: Send + fmt::Debug {
    fn kind(&self) -> SamplerKind;
    fn targets(&self) -> &[NodeId];
    fn calculation_nodes(&self) -> &[NodeId];
    /// One Metropolis-Hastings update; returns whether it was accepted.
    fn run(&mut self, model: &mut Model, state: &mut ModelValues) -> bool;
    fn stats(&self) -> &SamplerStats;
}

fn sampler_dependencies(model: &Model, targets: &[NodeId]) -> Result<Vec<NodeId>> {
    model.dependencies(
        targets,
        DependencyOptions {
            stochastic_only_terminal: false,
            ..Default::default()
        },
    )
}

fn check_target(model: &Model, id: NodeId) -> Result<()> {
    let def = model.definition();
    if id >= def.len() {
        return Err(Error::InvalidSampler(format!("no node #{id}")));
    }
    let node = def.node(id);
    if !node.is_stochastic() {
        return Err(Error::InvalidSampler(format!(
            "`{}` is not stochastic",
            node.name
        )));
    }
    if model.is_data(id) {
        return Err(Error::InvalidSampler(format!("`{}` is data", node.name)));
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct ScaleAdapter {
    adaptive: bool,
    interval: u64,
    target: f64,
    times_ran: u64,
    times_accepted: u64,
    times_adapted: u64,
}

impl ScaleAdapter {
    fn new(control: &SamplerControl, default_target: f64) -> Result<Self> {
        if control.adaptive && control.adapt_interval == 0 {
            return Err(Error::InvalidSampler(
                "adapt_interval must be positive".into(),
            ));
        }
        if !(control.scale >= 0.0 && control.scale.is_finite()) {
            return Err(Error::InvalidSampler(format!(
                "invalid scale {}",
                control.scale
            )));
        }
        Ok(ScaleAdapter {
            adaptive: control.adaptive,
            interval: control.adapt_interval as u64,
            target: control.target_acceptance.unwrap_or(default_target),
            times_ran: 0,
            times_accepted: 0,
            times_adapted: 0,
        })
    }

    /// Counts an outcome; at the end of an interval updates `scale` and
    /// returns the interval's acceptance rate.
    fn record(&mut self, accepted: bool, scale: &mut f64) -> Option<f64> {
        if !self.adaptive {
            return None;
        }
        self.times_ran += 1;
        self.times_accepted += u64::from(accepted);
        if self.times_ran % self.interval != 0 {
            return None;
        }
        let rate = self.times_accepted as f64 / self.interval as f64;
        self.times_adapted += 1;
        let gamma = 1.0 / ((self.times_adapted + 3) as f64).powf(0.8);
        *scale *= (10.0 * gamma * (rate - self.target)).exp();
        self.times_accepted = 0;
        Some(rate)
    }
}

/// Adaptive random-walk Metropolis on one scalar node.
#[derive(Debug, Clone)]
pub struct RwSampler {
    target: [NodeId; 1],
    elem: usize,
    calc_nodes: Vec<NodeId>,
    plan: CopyPlan,
    scale: f64,
    adapter: ScaleAdapter,
    stats: SamplerStats,
}

impl RwSampler {
    pub fn new(
        model: &Model,
        state: &ModelValues,
        target: NodeId,
        control: &SamplerControl,
    ) -> Result<Self> {
        check_target(model, target)?;
        let def = model.definition();
        let node = def.node(target);
        if !node.is_scalar() {
            return Err(Error::InvalidSampler(format!(
                "`{}` is not scalar; use a block sampler",
                node.name
            )));
        }
        let calc_nodes = sampler_dependencies(model, &[target])?;
        let plan = CopyPlan::new(def, state, &calc_nodes, true)?;
        Ok(RwSampler {
            target: [target],
            elem: node.elems.start,
            calc_nodes,
            plan,
            scale: control.scale,
            adapter: ScaleAdapter::new(control, SCALAR_TARGET)?,
            stats: SamplerStats {
                scale: control.scale,
                ..Default::default()
            },
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

fn finish(
    accepted: bool,
    log_ratio: f64,
    plan: &CopyPlan,
    model: &mut Model,
    state: &mut ModelValues,
    stats: &mut SamplerStats,
) {
    let synced = if accepted {
        plan.model_to_values(model, state, 1)
    } else {
        plan.values_to_model(state, 1, model)
    };
    synced.expect("sampler state has the model's layout");
    stats.proposals += 1;
    stats.accepted += u64::from(accepted);
    stats.nan_rejections += u64::from(log_ratio.is_nan());
}

impl Sampler for RwSampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::RandomWalk
    }

    fn targets(&self) -> &[NodeId] {
        &self.target
    }

    fn calculation_nodes(&self) -> &[NodeId] {
        &self.calc_nodes
    }

    fn run(&mut self, model: &mut Model, state: &mut ModelValues) -> bool {
        let z: f64 = model.rng().sample(StandardNormal);
        model.values[self.elem] += self.scale * z;
        let log_ratio = model.calculate_diff(&self.calc_nodes);
        let accepted = decide(log_ratio, model.rng());
        finish(
            accepted,
            log_ratio,
            &self.plan,
            model,
            state,
            &mut self.stats,
        );
        if let Some(rate) = self.adapter.record(accepted, &mut self.scale) {
            self.stats.scale = self.scale;
            self.stats.history.push(AdaptationStep {
                iteration: self.stats.proposals,
                acceptance_rate: rate,
                scale: self.scale,
            });
        }
        accepted
    }

    fn stats(&self) -> &SamplerStats {
        &self.stats
    }
}

/// Adaptive random-walk Metropolis with a multivariate normal proposal
/// over several scalar nodes or one multivariate node.
#[derive(Debug, Clone)]
pub struct BlockRwSampler {
    targets: Vec<NodeId>,
    elems: Vec<usize>,
    calc_nodes: Vec<NodeId>,
    plan: CopyPlan,
    scale: f64,
    adapter: ScaleAdapter,
    chol: DMatrix<f64>,
    // running moments of the chain over the block
    n: u64,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    z: Vec<f64>,
    current: Vec<f64>,
    stats: SamplerStats,
}

impl BlockRwSampler {
    pub fn new(
        model: &Model,
        state: &ModelValues,
        targets: &[NodeId],
        control: &SamplerControl,
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidSampler("block sampler needs targets".into()));
        }
        let mut elems = Vec::new();
        for (i, &t) in targets.iter().enumerate() {
            check_target(model, t)?;
            if targets[..i].contains(&t) {
                return Err(Error::InvalidSampler("duplicate block target".into()));
            }
            elems.extend(model.definition().node(t).elems.clone());
        }
        let d = elems.len();
        let cov = match &control.proposal_cov {
            Some(c) if c.len() == d * d => DMatrix::from_row_slice(d, d, c),
            Some(c) => {
                return Err(Error::InvalidSampler(format!(
                    "proposal covariance has {} entries, expected {}",
                    c.len(),
                    d * d
                )))
            }
            None => DMatrix::identity(d, d),
        };
        let chol = cov
            .cholesky()
            .ok_or_else(|| {
                Error::InvalidSampler("proposal covariance is not positive definite".into())
            })?
            .l();
        let calc_nodes = sampler_dependencies(model, targets)?;
        let plan = CopyPlan::new(model.definition(), state, &calc_nodes, true)?;
        let default_target = if d >= 2 { BLOCK_TARGET } else { SCALAR_TARGET };
        Ok(BlockRwSampler {
            targets: targets.to_vec(),
            elems,
            calc_nodes,
            plan,
            scale: control.scale,
            adapter: ScaleAdapter::new(control, default_target)?,
            chol,
            n: 0,
            mean: DVector::zeros(d),
            m2: DMatrix::zeros(d, d),
            z: vec![0.0; d],
            current: vec![0.0; d],
            stats: SamplerStats {
                scale: control.scale,
                ..Default::default()
            },
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Current proposal covariance before scaling.
    pub fn proposal_cov(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    fn observe(&mut self, model: &Model) {
        self.n += 1;
        let x = DVector::from_iterator(
            self.elems.len(),
            self.elems.iter().map(|&e| model.values()[e]),
        );
        let delta = &x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = &x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }
}

impl Sampler for BlockRwSampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::BlockRandomWalk
    }

    fn targets(&self) -> &[NodeId] {
        &self.targets
    }

    fn calculation_nodes(&self) -> &[NodeId] {
        &self.calc_nodes
    }

    fn run(&mut self, model: &mut Model, state: &mut ModelValues) -> bool {
        let d = self.elems.len();
        for z in self.z.iter_mut() {
            *z = model.rng().sample(StandardNormal);
        }
        for (c, &e) in self.current.iter_mut().zip(&self.elems) {
            *c = model.values[e];
        }
        for i in 0..d {
            let mut step = 0.0;
            for j in 0..=i {
                step += self.chol[(i, j)] * self.z[j];
            }
            model.values[self.elems[i]] = self.current[i] + self.scale * step;
        }
        let log_ratio = model.calculate_diff(&self.calc_nodes);
        let accepted = decide(log_ratio, model.rng());
        finish(
            accepted,
            log_ratio,
            &self.plan,
            model,
            state,
            &mut self.stats,
        );
        if self.adapter.adaptive {
            self.observe(model);
        }
        if let Some(rate) = self.adapter.record(accepted, &mut self.scale) {
            if self.n as usize > d {
                let mut cov = &self.m2 / (self.n - 1) as f64;
                for i in 0..d {
                    cov[(i, i)] += COV_JITTER;
                }
                if let Some(c) = cov.cholesky() {
                    self.chol = c.l();
                }
            }
            self.stats.scale = self.scale;
            self.stats.history.push(AdaptationStep {
                iteration: self.stats.proposals,
                acceptance_rate: rate,
                scale: self.scale,
            });
        }
        accepted
    }

    fn stats(&self) -> &SamplerStats {
        &self.stats
    }
}
