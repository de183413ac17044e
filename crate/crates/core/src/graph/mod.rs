//! Model definitions: the expanded node graph compiled from a syntax tree
//! and constants, with structure queries.
//!
//! Node ids are positions in the topological order, so sorting a node list
//! by id puts it in a valid calculation order.

mod build;
mod expr;

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

pub use expr::CExpr;

use crate::data::NamedArrays;
use crate::distributions::{Distribution, Registry};
use crate::error::{Error, Result};
use crate::parser::{parse_model, parse_var_ref, Expr, Index, ModelAst, UnaryOp, VarRef};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Stochastic,
    Deterministic,
    /// Computes a canonical parameter from a non-canonical parameterization.
    LiftedReparam,
    /// Holds an expression-valued distribution parameter.
    LiftedExpr,
}

impl NodeKind {
    pub fn is_stochastic(self) -> bool {
        self == NodeKind::Stochastic
    }

    pub fn is_lifted(self) -> bool {
        matches!(self, NodeKind::LiftedReparam | NodeKind::LiftedExpr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    /// Extent of each dimension; empty for a scalar.
    pub dims: Vec<usize>,
    /// Position of the first element in the flat value store.
    pub offset: usize,
    /// Storage created for a lifted node.
    pub lifted: bool,
}

impl Variable {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Row-major position of a 1-based multi-index within the variable.
    pub fn local_index(&self, idx: &[usize]) -> Option<usize> {
        if idx.len() != self.dims.len() {
            return None;
        }
        let mut off = 0;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            if i == 0 || i > d {
                return None;
            }
            off = off * d + (i - 1);
        }
        Some(off)
    }

    pub fn multi_index(&self, mut local: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for (slot, &d) in idx.iter_mut().zip(&self.dims).rev() {
            *slot = local % d + 1;
            local /= d;
        }
        idx
    }

    pub fn element_name(&self, local: usize) -> String {
        if self.dims.is_empty() {
            return self.name.clone();
        }
        let idx: Vec<String> = self
            .multi_index(local)
            .iter()
            .map(usize::to_string)
            .collect();
        format!("{}[{}]", self.name, idx.join(", "))
    }
}

/// One canonical parameter of a stochastic node.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    /// One compiled expression per element; scalar parameters have one.
    pub values: Vec<CExpr>,
    pub(crate) source: ParamExpr,
}

/// What supplies a distribution parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamExpr {
    Node(NodeId),
    Constant(f64),
    Expr(Expr),
}

#[derive(Debug, Clone)]
pub(crate) enum NodeBody {
    Stochastic {
        dist: Arc<Distribution>,
        params: Vec<Param>,
        /// Position of each parameter in the evaluated parameter buffer.
        ranges: Vec<Range<usize>>,
    },
    Deterministic(CExpr),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    pub variable: usize,
    /// Store indices of the node's elements.
    pub elems: Range<usize>,
    /// Index of the declaration that produced the node, in source order.
    pub declaration: usize,
    pub line: usize,
    pub parents: Vec<NodeId>,
    pub children: Vec<NodeId>,
    pub(crate) body: NodeBody,
}

impl Node {
    pub fn is_stochastic(&self) -> bool {
        self.kind.is_stochastic()
    }

    pub fn is_scalar(&self) -> bool {
        self.elems.len() == 1
    }

    pub fn distribution(&self) -> Option<&Arc<Distribution>> {
        match &self.body {
            NodeBody::Stochastic { dist, .. } => Some(dist),
            NodeBody::Deterministic(_) => None,
        }
    }

    pub fn params(&self) -> &[Param] {
        match &self.body {
            NodeBody::Stochastic { params, .. } => params,
            NodeBody::Deterministic(_) => &[],
        }
    }

    pub fn expression(&self) -> Option<&CExpr> {
        match &self.body {
            NodeBody::Deterministic(e) => Some(e),
            NodeBody::Stochastic { .. } => None,
        }
    }
}

/// Options for [`ModelDefinition::dependencies`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DependencyOptions {
    /// Include the starting nodes.
    pub include_self: bool,
    /// Keep data nodes; when false every data node is dropped.
    pub include_data: bool,
    /// Drop deterministic nodes from which no stochastic node in the result
    /// is reachable.
    pub stochastic_only_terminal: bool,
    /// Drop stochastic nodes other than the starting nodes.
    pub deterministic_only: bool,
    /// Continue past stochastic nodes to all descendants.
    pub downstream_all: bool,
}

impl Default for DependencyOptions {
    fn default() -> Self {
        DependencyOptions {
            include_self: true,
            include_data: true,
            stochastic_only_terminal: true,
            deterministic_only: false,
            downstream_all: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeFilter {
    /// Stochastic nodes with no stochastic ancestor reached through
    /// deterministic nodes.
    Top,
    /// Non-data stochastic nodes with stochastic parents and stochastic
    /// dependents.
    Latent,
    /// Stochastic nodes with no stochastic dependents.
    End,
    /// Deterministic nodes without children.
    DeterministicEnd,
    Stochastic,
    Deterministic,
    Data,
    NonData,
    Lifted,
}

impl FromStr for NodeFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "top" => NodeFilter::Top,
            "latent" => NodeFilter::Latent,
            "end" => NodeFilter::End,
            "determ_end" | "deterministic_end" => NodeFilter::DeterministicEnd,
            "stoch" | "stochastic" => NodeFilter::Stochastic,
            "determ" | "deterministic" => NodeFilter::Deterministic,
            "data" => NodeFilter::Data,
            "nondata" | "non_data" => NodeFilter::NonData,
            "lifted" => NodeFilter::Lifted,
            other => return Err(Error::UnknownFilter(other.to_string())),
        })
    }
}

thread_local! {
    static QUERIES: Cell<u64> = const { Cell::new(0) };
}

fn count_query() {
    QUERIES.with(|q| q.set(q.get() + 1));
}

/// Number of structure queries (dependency, classification and name
/// expansion) made on the current thread.
pub fn structure_query_count() -> u64 {
    QUERIES.with(Cell::get)
}

/// The compiled graph of a model.
#[derive(Debug, Clone)]
pub struct ModelDefinition {
    nodes: Vec<Node>,
    variables: Vec<Variable>,
    var_index: HashMap<String, usize>,
    node_index: HashMap<String, NodeId>,
    /// Owning node of each store element.
    owner: Vec<Option<NodeId>>,
    constants: NamedArrays,
    param_buffer_len: usize,
}

impl ModelDefinition {
    /// Compiles a syntax tree against constants and a distribution registry.
    pub fn build(ast: &ModelAst, constants: &NamedArrays, registry: &Registry) -> Result<Self> {
        build::build(ast, constants, registry)
    }

    /// Parses and compiles model text with the built-in distributions.
    pub fn from_source(src: &str, constants: &NamedArrays) -> Result<Self> {
        Self::build(&parse_model(src)?, constants, &Registry::with_builtins())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_index.get(name).copied()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id].name
    }

    pub fn node_names(&self, ids: &[NodeId]) -> Vec<String> {
        ids.iter().map(|&i| self.nodes[i].name.clone()).collect()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.var_index.get(name).map(|&i| &self.variables[i])
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.var_index.get(name).copied()
    }

    pub fn constants(&self) -> &NamedArrays {
        &self.constants
    }

    /// Size of the flat value store.
    pub fn store_len(&self) -> usize {
        self.owner.len()
    }

    pub fn owner_of(&self, elem: usize) -> Option<NodeId> {
        self.owner[elem]
    }

    pub(crate) fn param_buffer_len(&self) -> usize {
        self.param_buffer_len
    }

    /// Node ids in calculation order.
    pub fn topological_order(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).collect()
    }

    pub fn stochastic_nodes(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_stochastic())
            .collect()
    }

    pub fn lifted_nodes(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].kind.is_lifted())
            .collect()
    }

    /// Variable owning a store element.
    pub fn variable_of(&self, elem: usize) -> &Variable {
        variable_of(&self.variables, elem)
    }

    pub fn element_name(&self, elem: usize) -> String {
        let v = self.variable_of(elem);
        v.element_name(elem - v.offset)
    }

    fn eval_index(&self, e: &Expr, spec: &str) -> Result<usize> {
        let lookup = |name: &str, idx: &[usize]| -> std::result::Result<f64, String> {
            self.constants
                .get(name)
                .and_then(|a| a.get(idx))
                .ok_or_else(|| format!("cannot resolve `{name}`"))
        };
        let v = crate::functions::eval_expr(e, &lookup).map_err(|message| Error::OutOfBounds {
            spec: spec.to_string(),
            message,
        })?;
        crate::functions::as_index(v).map_err(|message| Error::OutOfBounds {
            spec: spec.to_string(),
            message,
        })
    }

    /// Store elements addressed by a variable reference, in row-major order.
    pub fn resolve_elements(&self, r: &VarRef, spec: &str) -> Result<Vec<usize>> {
        let var = self
            .variable(&r.name)
            .ok_or_else(|| Error::UnknownVariable(r.name.clone()))?;
        if r.indices.is_empty() {
            return Ok(var.range().collect());
        }
        if r.indices.len() != var.dims.len() {
            return Err(Error::OutOfBounds {
                spec: spec.to_string(),
                message: format!(
                    "`{}` has {} dimension(s), {} index(es) given",
                    r.name,
                    var.dims.len(),
                    r.indices.len()
                ),
            });
        }
        let mut ranges = Vec::with_capacity(var.dims.len());
        for (ix, &d) in r.indices.iter().zip(&var.dims) {
            let (lo, hi) = match ix {
                Index::Single(e) => {
                    let i = self.eval_index(e, spec)?;
                    (i, i)
                }
                Index::Range(a, b) => (self.eval_index(a, spec)?, self.eval_index(b, spec)?),
                Index::All => (1, d),
            };
            if hi > d || lo > hi {
                return Err(Error::OutOfBounds {
                    spec: spec.to_string(),
                    message: format!("index {lo}:{hi} outside 1:{d}"),
                });
            }
            ranges.push((lo, hi));
        }
        Ok(row_major(&ranges)
            .iter()
            .map(|idx| var.offset + var.local_index(idx).expect("within extents"))
            .collect())
    }

    /// Maps a node or variable expression such as `theta[1:3]` to the
    /// covering declared nodes, in element order.
    pub fn expand_node_names(&self, spec: &str) -> Result<Vec<NodeId>> {
        count_query();
        if let Some(id) = self.node_id(spec.trim()) {
            return Ok(vec![id]);
        }
        let r =
            parse_var_ref(spec).map_err(|e| Error::InvalidArgument(format!("`{spec}`: {e}")))?;
        let mut out: Vec<NodeId> = Vec::new();
        for elem in self.resolve_elements(&r, spec)? {
            if let Some(n) = self.owner[elem] {
                if !out.contains(&n) {
                    out.push(n);
                }
            }
        }
        Ok(out)
    }

    /// Expands several specs, keeping first occurrences.
    pub fn expand_all<S: AsRef<str>>(&self, specs: &[S]) -> Result<Vec<NodeId>> {
        let mut out: Vec<NodeId> = Vec::new();
        for s in specs {
            for n in self.expand_node_names(s.as_ref())? {
                if !out.contains(&n) {
                    out.push(n);
                }
            }
        }
        Ok(out)
    }

    fn check_ids(&self, ids: &[NodeId]) -> Result<()> {
        match ids.iter().find(|&&i| i >= self.nodes.len()) {
            Some(i) => Err(Error::UnknownNode(format!("#{i}"))),
            None => Ok(()),
        }
    }

    /// Nodes whose values or log probabilities depend on `from`, in
    /// topological order. `data` holds per-node data flags (may be empty).
    pub fn dependencies(
        &self,
        from: &[NodeId],
        opts: DependencyOptions,
        data: &[bool],
    ) -> Result<Vec<NodeId>> {
        count_query();
        self.check_ids(from)?;
        let n = self.nodes.len();
        let is_data = |i: usize| data.get(i).copied().unwrap_or(false);
        let mut is_from = vec![false; n];
        let mut visited = vec![false; n];
        let mut stack: Vec<NodeId> = Vec::new();
        for &f in from {
            is_from[f] = true;
            stack.push(f);
        }
        while let Some(u) = stack.pop() {
            for &c in &self.nodes[u].children {
                if !visited[c] {
                    visited[c] = true;
                    if opts.downstream_all || !self.nodes[c].is_stochastic() {
                        stack.push(c);
                    }
                }
            }
        }
        if opts.stochastic_only_terminal {
            // ids are topological, so children are settled before parents
            let mut useful = vec![false; n];
            for u in (0..n).rev() {
                if !visited[u] {
                    continue;
                }
                useful[u] = self.nodes[u].is_stochastic()
                    || self.nodes[u]
                        .children
                        .iter()
                        .any(|&c| visited[c] && useful[c]);
            }
            for u in 0..n {
                if visited[u] && !useful[u] && !is_from[u] {
                    visited[u] = false;
                }
            }
        }
        Ok((0..n)
            .filter(|&u| {
                if is_from[u] {
                    if !opts.include_self {
                        return false;
                    }
                } else if !visited[u] || (opts.deterministic_only && self.nodes[u].is_stochastic())
                {
                    return false;
                }
                opts.include_data || !is_data(u)
            })
            .collect())
    }

    /// Default dependency query.
    pub fn dependencies_of(&self, from: &[NodeId]) -> Result<Vec<NodeId>> {
        self.dependencies(from, DependencyOptions::default(), &[])
    }

    fn stochastic_reach(&self) -> (Vec<bool>, Vec<bool>) {
        let n = self.nodes.len();
        let mut up = vec![false; n];
        for u in 0..n {
            up[u] = self.nodes[u]
                .parents
                .iter()
                .any(|&p| self.nodes[p].is_stochastic() || up[p]);
        }
        let mut down = vec![false; n];
        for u in (0..n).rev() {
            down[u] = self.nodes[u]
                .children
                .iter()
                .any(|&c| self.nodes[c].is_stochastic() || down[c]);
        }
        (up, down)
    }

    /// Nodes satisfying every filter, in topological order.
    pub fn classify(&self, filters: &[NodeFilter], data: &[bool]) -> Vec<NodeId> {
        count_query();
        let (up, down) = self.stochastic_reach();
        let is_data = |i: usize| data.get(i).copied().unwrap_or(false);
        (0..self.nodes.len())
            .filter(|&i| {
                let node = &self.nodes[i];
                let stoch = node.is_stochastic();
                filters.iter().all(|f| match f {
                    NodeFilter::Top => stoch && !up[i],
                    NodeFilter::Latent => stoch && up[i] && down[i] && !is_data(i),
                    NodeFilter::End => stoch && !down[i],
                    NodeFilter::DeterministicEnd => !stoch && node.children.is_empty(),
                    NodeFilter::Stochastic => stoch,
                    NodeFilter::Deterministic => !stoch,
                    NodeFilter::Data => is_data(i),
                    NodeFilter::NonData => !is_data(i),
                    NodeFilter::Lifted => node.kind.is_lifted(),
                })
            })
            .collect()
    }

    /// Parses filter keywords and classifies.
    pub fn classify_by_names(&self, filters: &[&str], data: &[bool]) -> Result<Vec<NodeId>> {
        let parsed = filters
            .iter()
            .map(|f| f.parse())
            .collect::<Result<Vec<NodeFilter>>>()?;
        Ok(self.classify(&parsed, data))
    }

    /// The node or expression supplying a canonical parameter of a
    /// stochastic node.
    pub fn param_expr(&self, node: NodeId, param: &str) -> Result<ParamExpr> {
        self.check_ids(&[node])?;
        let n = &self.nodes[node];
        let Some(dist) = n.distribution() else {
            return Err(Error::InvalidArgument(format!(
                "`{}` is not stochastic",
                n.name
            )));
        };
        n.params()
            .iter()
            .find(|p| p.name == param)
            .map(|p| p.source.clone())
            .ok_or_else(|| Error::Parameterization {
                dist: dist.name().to_string(),
                message: format!(
                    "no canonical parameter `{param}` (has {})",
                    dist.spec().canonical.join(", ")
                ),
                line: Default::default(),
            })
    }

    /// Readable expression for compiled code, naming store elements.
    pub fn cexpr_to_expr(&self, e: &CExpr) -> Expr {
        cexpr_to_expr(&self.variables, e)
    }
}

/// All multi-indices within inclusive 1-based ranges, last index fastest.
pub(crate) fn row_major(ranges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    if ranges.iter().any(|&(lo, hi)| lo > hi) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(idx.clone());
        let mut k = idx.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if idx[k] < ranges[k].1 {
                idx[k] += 1;
                break;
            }
            idx[k] = ranges[k].0;
        }
    }
}

fn variable_of(variables: &[Variable], elem: usize) -> &Variable {
    let i = variables
        .partition_point(|v| v.offset <= elem)
        .saturating_sub(1);
    &variables[i]
}

pub(crate) fn cexpr_to_expr(variables: &[Variable], e: &CExpr) -> Expr {
    let rec = |a: &CExpr| cexpr_to_expr(variables, a);
    match e {
        CExpr::Const(c) if *c < 0.0 => Expr::Unary(UnaryOp::Neg, Box::new(Expr::Number(-c))),
        CExpr::Const(c) => Expr::Number(*c),
        CExpr::Elem(i) => {
            let v = variable_of(variables, *i);
            let indices = v
                .multi_index(i - v.offset)
                .into_iter()
                .map(|k| Index::Single(Expr::Number(k as f64)))
                .collect();
            Expr::Var(VarRef {
                name: v.name.clone(),
                indices,
            })
        }
        CExpr::Unary(op, a) => Expr::Unary(*op, Box::new(rec(a))),
        CExpr::Binary(op, a, b) => Expr::binary(*op, rec(a), rec(b)),
        CExpr::Call(f, args) => Expr::Call(f.name().to_string(), args.iter().map(rec).collect()),
        CExpr::Reduce(r, args) => Expr::Call(
            r.name().to_string(),
            args.iter().flatten().map(rec).collect(),
        ),
    }
}

impl fmt::Display for ModelDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for node in &self.nodes {
            writeln!(f, "{} ({:?})", node.name, node.kind)?;
        }
        Ok(())
    }
}
