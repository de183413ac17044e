//! Model objects: value and log-probability storage, data flags and the
//! node operations, plus [`ModelValues`] containers.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Array, NamedArrays};
use crate::distributions::Params;
use crate::error::{Error, Result};
use crate::graph::{DependencyOptions, ModelDefinition, NodeBody, NodeFilter, NodeId};
use crate::parser::parse_var_ref;

mod values;

pub use values::{copy, format_value, CopyPlan, CopySource, CopyTarget, ModelValues};

/// A runtime model built from a [`ModelDefinition`]. Independent models
/// may share one definition.
#[derive(Debug, Clone)]
pub struct Model {
    def: Arc<ModelDefinition>,
    pub(crate) values: Vec<f64>,
    /// One entry per node; always 0 for deterministic nodes.
    pub(crate) log_probs: Vec<f64>,
    data: Vec<bool>,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
}

fn check_shape(name: &str, expected: &[usize], a: &Array) -> Result<()> {
    let n: usize = expected.iter().product();
    let scalar_like = expected.iter().all(|&d| d == 1) && a.len() == 1;
    if a.len() != n || !(scalar_like || a.dims.is_empty() || a.dims == expected) {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            expected: n,
            found: a.len(),
        });
    }
    Ok(())
}

impl Model {
    /// Sets data, applies initial values, simulates whatever is still
    /// missing in topological order and runs a full calculate pass.
    pub fn new(
        def: Arc<ModelDefinition>,
        data: &NamedArrays,
        inits: &NamedArrays,
        seed: u64,
    ) -> Result<Self> {
        let n = def.len();
        let mut m = Model {
            values: vec![f64::NAN; def.store_len()],
            log_probs: vec![0.0; n],
            data: vec![false; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
            scratch: vec![0.0; def.param_buffer_len()],
            def,
        };
        for (name, arr) in data {
            let var = m
                .def
                .variable(name)
                .filter(|v| !v.lifted)
                .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            check_shape(name, &var.dims, arr)?;
            let offset = var.offset;
            for (i, &v) in arr.values.iter().enumerate() {
                if v.is_nan() {
                    continue;
                }
                let e = offset + i;
                let owner = m.def.owner_of(e).filter(|&o| m.def.node(o).is_stochastic());
                let Some(owner) = owner else {
                    return Err(Error::InvalidArgument(format!(
                        "data given for `{}`, which is not a stochastic node",
                        m.def.element_name(e)
                    )));
                };
                m.values[e] = v;
                m.data[owner] = true;
            }
        }
        for id in 0..n {
            if m.data[id] {
                let node = m.def.node(id);
                if node.elems.clone().any(|e| m.values[e].is_nan()) {
                    return Err(Error::InvalidArgument(format!(
                        "`{}` is only partially observed",
                        node.name
                    )));
                }
            }
        }
        for (name, arr) in inits {
            let var = m
                .def
                .variable(name)
                .filter(|v| !v.lifted)
                .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            check_shape(name, &var.dims, arr)?;
            let offset = var.offset;
            for (i, &v) in arr.values.iter().enumerate() {
                let e = offset + i;
                let settable = m
                    .def
                    .owner_of(e)
                    .is_some_and(|o| m.def.node(o).is_stochastic() && !m.data[o]);
                if settable && !v.is_nan() {
                    m.values[e] = v;
                }
            }
        }
        let def = m.def.clone();
        for id in 0..n {
            let node = def.node(id);
            if node.is_stochastic() {
                if !m.data[id]
                    && node.elems.clone().any(|e| m.values[e].is_nan())
                    && !m.simulate_node(id)
                {
                    // blame an earlier impossible value if there is one
                    let culprit = (0..id)
                        .find(|&u| {
                            let lp = m.eval_node(u);
                            lp.is_nan() || lp == f64::NEG_INFINITY
                        })
                        .unwrap_or(id);
                    return Err(Error::InvalidInitialState {
                        node: def.node(culprit).name.clone(),
                    });
                }
            } else {
                m.eval_node(id);
            }
        }
        for id in 0..n {
            let lp = m.eval_node(id);
            if lp.is_nan() || lp == f64::NEG_INFINITY {
                return Err(Error::InvalidInitialState {
                    node: def.node(id).name.clone(),
                });
            }
        }
        Ok(m)
    }

    /// Builds a model with a fresh default-registry definition.
    pub fn from_source(
        src: &str,
        constants: &NamedArrays,
        data: &NamedArrays,
        inits: &NamedArrays,
        seed: u64,
    ) -> Result<Self> {
        let def = Arc::new(ModelDefinition::from_source(src, constants)?);
        Model::new(def, data, inits, seed)
    }

    pub fn definition(&self) -> &Arc<ModelDefinition> {
        &self.def
    }

    /// The whole value store, laid out as in the definition.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored log probabilities, one per node.
    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn data_flags(&self) -> &[bool] {
        &self.data
    }

    pub fn is_data(&self, id: NodeId) -> bool {
        self.data[id]
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Evaluates the parameters of a stochastic node into the scratch
    /// buffer; returns the used length.
    fn eval_params(&mut self, id: NodeId) -> usize {
        let NodeBody::Stochastic { params, .. } = &self.def.node(id).body else {
            return 0;
        };
        let mut k = 0;
        for p in params {
            for e in &p.values {
                self.scratch[k] = e.eval(&self.values);
                k += 1;
            }
        }
        k
    }

    /// Recomputes one node: stores a deterministic value, or stores and
    /// returns a stochastic node's log probability.
    #[inline]
    fn eval_node(&mut self, id: NodeId) -> f64 {
        let node = self.def.node(id);
        match &node.body {
            NodeBody::Deterministic(e) => {
                self.values[node.elems.start] = e.eval(&self.values);
                0.0
            }
            NodeBody::Stochastic { .. } => {
                let k = self.eval_params(id);
                let node = self.def.node(id);
                let NodeBody::Stochastic { dist, ranges, .. } = &node.body else {
                    unreachable!()
                };
                let lp = dist
                    .log_density(
                        &self.values[node.elems.clone()],
                        &Params::new(&self.scratch[..k], ranges),
                    )
                    .unwrap_or(f64::NEG_INFINITY);
                self.log_probs[id] = lp;
                lp
            }
        }
    }

    /// Draws a stochastic node, or recomputes a deterministic one. Returns
    /// false when the parameters were invalid and the value was kept.
    fn simulate_node(&mut self, id: NodeId) -> bool {
        let node = self.def.node(id);
        match &node.body {
            NodeBody::Deterministic(e) => {
                self.values[node.elems.start] = e.eval(&self.values);
                true
            }
            NodeBody::Stochastic { .. } => {
                let k = self.eval_params(id);
                let node = self.def.node(id);
                let NodeBody::Stochastic { dist, ranges, .. } = &node.body else {
                    unreachable!()
                };
                let elems = node.elems.clone();
                let mut out = [0.0; 1];
                let params = Params::new(&self.scratch[..k], ranges);
                if elems.len() == 1 {
                    if dist
                        .simulate_into(&params, &mut self.rng, &mut out)
                        .is_err()
                    {
                        return false;
                    }
                    self.values[elems.start] = out[0];
                } else {
                    let mut buf = vec![0.0; elems.len()];
                    if dist
                        .simulate_into(&params, &mut self.rng, &mut buf)
                        .is_err()
                    {
                        return false;
                    }
                    self.values[elems].copy_from_slice(&buf);
                }
                true
            }
        }
    }

    /// Recomputes `nodes` in order and returns the sum of the stochastic
    /// nodes' new log probabilities.
    pub fn calculate(&mut self, nodes: &[NodeId]) -> f64 {
        let mut total = 0.0;
        for &id in nodes {
            total += self.eval_node(id);
        }
        total
    }

    /// Like [`Model::calculate`], but returns the sum of the changes of
    /// the stored log probabilities.
    pub fn calculate_diff(&mut self, nodes: &[NodeId]) -> f64 {
        let mut total = 0.0;
        for &id in nodes {
            let old = self.log_probs[id];
            let new = self.eval_node(id);
            if self.def.node(id).is_stochastic() {
                total += new - old;
            }
        }
        total
    }

    /// Draws fresh values for stochastic nodes (data nodes only when
    /// `include_data`) and recomputes deterministic ones. Stored log
    /// probabilities are left untouched.
    pub fn simulate(&mut self, nodes: &[NodeId], include_data: bool) {
        for &id in nodes {
            if include_data || !self.data[id] {
                self.simulate_node(id);
            }
        }
    }

    /// Sum of stored log probabilities, without recomputation.
    pub fn get_log_prob(&self, nodes: &[NodeId]) -> f64 {
        nodes.iter().map(|&id| self.log_probs[id]).sum()
    }

    /// Every node in topological order.
    pub fn all_nodes(&self) -> Vec<NodeId> {
        (0..self.def.len()).collect()
    }

    fn elements(&self, spec: &str) -> Result<Vec<usize>> {
        if let Some(id) = self.def.node_id(spec.trim()) {
            return Ok(self.def.node(id).elems.clone().collect());
        }
        let r =
            parse_var_ref(spec).map_err(|e| Error::InvalidArgument(format!("`{spec}`: {e}")))?;
        self.def.resolve_elements(&r, spec)
    }

    /// Values addressed by a node name or variable expression, e.g.
    /// `theta`, `theta[4]`, `theta[1:3]` or `y[2, ]`.
    pub fn get(&self, spec: &str) -> Result<Vec<f64>> {
        Ok(self
            .elements(spec)?
            .into_iter()
            .map(|e| self.values[e])
            .collect())
    }

    /// Writes values addressed like [`Model::get`]; a single value is
    /// broadcast.
    pub fn set(&mut self, spec: &str, values: &[f64]) -> Result<()> {
        let elems = self.elements(spec)?;
        if values.len() != elems.len() && values.len() != 1 {
            return Err(Error::ShapeMismatch {
                name: spec.to_string(),
                expected: elems.len(),
                found: values.len(),
            });
        }
        for (i, e) in elems.into_iter().enumerate() {
            self.values[e] = if values.len() == 1 {
                values[0]
            } else {
                values[i]
            };
        }
        Ok(())
    }

    pub fn get_scalar(&self, spec: &str) -> Result<f64> {
        let v = self.get(spec)?;
        match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(Error::ShapeMismatch {
                name: spec.to_string(),
                expected: 1,
                found: v.len(),
            }),
        }
    }

    /// Dependency query using this model's data flags.
    pub fn dependencies(&self, from: &[NodeId], opts: DependencyOptions) -> Result<Vec<NodeId>> {
        self.def.dependencies(from, opts, &self.data)
    }

    /// Node classification using this model's data flags.
    pub fn classify(&self, filters: &[NodeFilter]) -> Vec<NodeId> {
        self.def.classify(filters, &self.data)
    }

    pub fn expand(&self, spec: &str) -> Result<Vec<NodeId>> {
        self.def.expand_node_names(spec)
    }

    pub fn expand_all<S: AsRef<str>>(&self, specs: &[S]) -> Result<Vec<NodeId>> {
        self.def.expand_all(specs)
    }
}

#[cfg(test)]
mod tests;
