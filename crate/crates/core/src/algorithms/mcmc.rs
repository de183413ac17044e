use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::graph::{ModelDefinition, NodeFilter, NodeId};
use crate::runtime::{CopyPlan, Model, ModelValues};

use super::samplers::{
    BlockRwSampler, RwSampler, Sampler, SamplerControl, SamplerKind, SamplerStats,
};

/// One sampler assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub targets: Vec<NodeId>,
    pub control: SamplerControl,
}

/// Mutable list of sampler assignments and monitored variables.
#[derive(Debug, Clone)]
pub struct McmcConfiguration {
    def: Arc<ModelDefinition>,
    data: Vec<bool>,
    samplers: Vec<SamplerSpec>,
    monitors: Vec<String>,
}

impl McmcConfiguration {
    /// One adaptive scalar random-walk sampler per non-data stochastic
    /// scalar node, in topological order; monitors the variables holding
    /// top-level nodes.
    pub fn new(model: &Model) -> Self {
        let mut cfg = Self::empty(model);
        for id in model.classify(&[NodeFilter::Stochastic, NodeFilter::NonData]) {
            if model.definition().node(id).is_scalar() {
                cfg.samplers.push(SamplerSpec {
                    kind: SamplerKind::RandomWalk,
                    targets: vec![id],
                    control: SamplerControl::default(),
                });
            }
        }
        let def = model.definition();
        for id in model.classify(&[NodeFilter::Top]) {
            let name = &def.variables()[def.node(id).variable].name;
            if !cfg.monitors.contains(name) {
                cfg.monitors.push(name.clone());
            }
        }
        cfg
    }

    /// No samplers and no monitors.
    pub fn empty(model: &Model) -> Self {
        McmcConfiguration {
            def: model.definition().clone(),
            data: model.data_flags().to_vec(),
            samplers: Vec::new(),
            monitors: Vec::new(),
        }
    }

    pub fn definition(&self) -> &Arc<ModelDefinition> {
        &self.def
    }

    pub fn samplers(&self) -> &[SamplerSpec] {
        &self.samplers
    }

    /// Human-readable assignments, e.g. `RW sampler: theta[1]`.
    pub fn list_samplers(&self) -> Vec<String> {
        self.samplers
            .iter()
            .map(|s| {
                format!(
                    "{} sampler: {}",
                    s.kind,
                    self.def.node_names(&s.targets).join(", ")
                )
            })
            .collect()
    }

    fn check(&self, kind: SamplerKind, targets: &[NodeId]) -> Result<()> {
        if targets.is_empty() {
            return Err(Error::InvalidSampler("sampler has no target nodes".into()));
        }
        for &t in targets {
            if t >= self.def.len() {
                return Err(Error::UnknownNode(format!("#{t}")));
            }
            let node = self.def.node(t);
            if !node.is_stochastic() {
                return Err(Error::InvalidSampler(format!(
                    "`{}` is not stochastic",
                    node.name
                )));
            }
            if self.data[t] {
                return Err(Error::InvalidSampler(format!("`{}` is data", node.name)));
            }
        }
        if kind == SamplerKind::RandomWalk
            && (targets.len() != 1 || !self.def.node(targets[0]).is_scalar())
        {
            return Err(Error::InvalidSampler(
                "a scalar random-walk sampler needs exactly one scalar node".into(),
            ));
        }
        Ok(())
    }

    /// Appends a sampler on nodes given by name specs, e.g. `["alpha", "beta"]`.
    pub fn add_sampler<S: AsRef<str>>(
        &mut self,
        kind: SamplerKind,
        targets: &[S],
        control: SamplerControl,
    ) -> Result<()> {
        let mut ids = Vec::new();
        for t in targets {
            let found = self.def.expand_node_names(t.as_ref())?;
            if found.is_empty() {
                return Err(Error::UnknownNode(t.as_ref().to_string()));
            }
            for id in found {
                if !ids.contains(&id) {
                    ids.push(id);
                }
            }
        }
        self.add_sampler_nodes(kind, ids, control)
    }

    pub fn add_sampler_nodes(
        &mut self,
        kind: SamplerKind,
        targets: Vec<NodeId>,
        control: SamplerControl,
    ) -> Result<()> {
        self.check(kind, &targets)?;
        self.samplers.push(SamplerSpec {
            kind,
            targets,
            control,
        });
        Ok(())
    }

    pub fn remove_sampler(&mut self, index: usize) -> Result<SamplerSpec> {
        if index >= self.samplers.len() {
            return Err(Error::InvalidArgument(format!(
                "no sampler {index}; there are {}",
                self.samplers.len()
            )));
        }
        Ok(self.samplers.remove(index))
    }

    /// Removes every sampler acting on any node of `spec`; returns how
    /// many were removed.
    pub fn remove_samplers_for(&mut self, spec: &str) -> Result<usize> {
        let ids = self.def.expand_node_names(spec)?;
        let before = self.samplers.len();
        self.samplers
            .retain(|s| !s.targets.iter().any(|t| ids.contains(t)));
        Ok(before - self.samplers.len())
    }

    pub fn monitors(&self) -> &[String] {
        &self.monitors
    }

    pub fn set_monitors<S: AsRef<str>>(&mut self, names: &[S]) -> Result<()> {
        let mut out = Vec::new();
        for n in names {
            let n = n.as_ref();
            match self.def.variable(n) {
                Some(v) if !v.lifted => {}
                _ => return Err(Error::UnknownVariable(n.to_string())),
            }
            if !out.iter().any(|m: &String| m == n) {
                out.push(n.to_string());
            }
        }
        self.monitors = out;
        Ok(())
    }

    pub fn add_monitor(&mut self, name: &str) -> Result<()> {
        let mut all = self.monitors.clone();
        all.push(name.to_string());
        self.set_monitors(&all)
    }
}

/// A specialized MCMC run over an owned model.
#[derive(Debug)]
pub struct Mcmc {
    model: Model,
    state: ModelValues,
    samplers: Vec<Box<dyn Sampler>>,
    specs: Vec<SamplerSpec>,
    monitors: ModelValues,
    monitor_plan: CopyPlan,
    all_nodes: Vec<NodeId>,
    full_plan: CopyPlan,
    wall_seconds: f64,
    iterations: u64,
}

impl Mcmc {
    pub fn new(model: Model, config: &McmcConfiguration) -> Result<Self> {
        if !Arc::ptr_eq(model.definition(), config.definition()) {
            return Err(Error::InvalidArgument(
                "configuration was made for another model definition".into(),
            ));
        }
        let def = model.definition().clone();
        let all_nodes = model.all_nodes();
        let state = ModelValues::from_definition(&def, 1, true);
        let full_plan = CopyPlan::new(&def, &state, &all_nodes, true)?;
        let mut samplers: Vec<Box<dyn Sampler>> = Vec::with_capacity(config.samplers.len());
        for s in &config.samplers {
            samplers.push(match s.kind {
                SamplerKind::RandomWalk => {
                    if s.targets.len() != 1 {
                        return Err(Error::InvalidSampler(
                            "a scalar random-walk sampler needs exactly one node".into(),
                        ));
                    }
                    Box::new(RwSampler::new(&model, &state, s.targets[0], &s.control)?)
                }
                SamplerKind::BlockRandomWalk => {
                    Box::new(BlockRwSampler::new(&model, &state, &s.targets, &s.control)?)
                }
            });
        }
        let monitors = ModelValues::for_variables(&def, config.monitors(), 0, false)?;
        let monitor_nodes: Vec<NodeId> = all_nodes
            .iter()
            .copied()
            .filter(|&n| {
                let var = &def.variables()[def.node(n).variable].name;
                config.monitors().contains(var)
            })
            .collect();
        let monitor_plan = CopyPlan::new(&def, &monitors, &monitor_nodes, false)?;
        let mut mcmc = Mcmc {
            model,
            state,
            samplers,
            specs: config.samplers.clone(),
            monitors,
            monitor_plan,
            all_nodes,
            full_plan,
            wall_seconds: 0.0,
            iterations: 0,
        };
        mcmc.sync();
        Ok(mcmc)
    }

    /// Recomputes the whole model and refreshes the samplers' copy of it.
    /// Call after changing model values outside the samplers.
    pub fn sync(&mut self) {
        self.model.calculate(&self.all_nodes);
        self.full_plan
            .model_to_values(&self.model, &mut self.state, 1)
            .expect("state has the model's layout");
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Mutable access to the model; follow changes with [`Mcmc::sync`].
    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn samplers(&self) -> &[Box<dyn Sampler>] {
        &self.samplers
    }

    pub fn sampler_specs(&self) -> &[SamplerSpec] {
        &self.specs
    }

    pub fn sampler_stats(&self) -> Vec<&SamplerStats> {
        self.samplers.iter().map(|s| s.stats()).collect()
    }

    /// The samplers' synchronized copy of the model.
    pub fn state(&self) -> &ModelValues {
        &self.state
    }

    /// Wall time of the most recent run.
    pub fn wall_seconds(&self) -> f64 {
        self.wall_seconds
    }

    /// Total iterations executed so far.
    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// Runs every sampler once per iteration and calls `record` on each
    /// iteration after `burnin` whose offset is a multiple of `thin`.
    pub fn run_with<F: FnMut(&Model)>(
        &mut self,
        niter: usize,
        burnin: usize,
        thin: usize,
        mut record: F,
    ) -> Result<()> {
        if thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        if burnin > niter {
            return Err(Error::InvalidArgument(format!(
                "burn-in {burnin} exceeds the {niter} iterations"
            )));
        }
        let start = Instant::now();
        for iter in 1..=niter {
            for s in self.samplers.iter_mut() {
                s.run(&mut self.model, &mut self.state);
            }
            if iter > burnin && (iter - burnin) % thin == 0 {
                record(&self.model);
            }
        }
        self.iterations += niter as u64;
        self.wall_seconds = start.elapsed().as_secs_f64();
        Ok(())
    }

    /// Runs `niter` iterations and returns the monitored variables of the
    /// retained ones; `niter = 0` gives an empty container.
    pub fn run(&mut self, niter: usize, burnin: usize, thin: usize) -> Result<ModelValues> {
        let mut out = self.monitors.clone();
        if thin > 0 && niter >= burnin {
            out.resize((niter - burnin) / thin);
        }
        let plan = self.monitor_plan.clone();
        let mut row = 0;
        self.run_with(niter, burnin, thin, |m| {
            row += 1;
            plan.model_to_values(m, &mut out, row)
                .expect("monitor rows were allocated");
        })?;
        Ok(out)
    }
}
