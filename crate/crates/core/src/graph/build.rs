use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::ops::Range;
use std::sync::Arc;

use super::{
    cexpr_to_expr, row_major, CExpr, ModelDefinition, Node, NodeBody, NodeId, NodeKind, Param,
    ParamExpr, Variable,
};
use crate::data::NamedArrays;
use crate::distributions::{collect_names, Distribution, Registry, ValueShape};
use crate::error::{Error, Line, Result};
use crate::functions::{as_index, eval_expr, Reduction, ScalarFn};
use crate::parser::{
    deparse_expr, format_number, BinaryOp, Declaration, DeclarationRhs, Expr, Index, ModelAst,
    Statement, UnaryOp, VarRef,
};

/// One declaration after loop expansion.
struct Instance {
    decl: usize,
    seq: usize,
    line: usize,
    var: String,
    /// Inclusive 1-based ranges per index; empty for an unindexed target.
    ranges: Vec<(usize, usize)>,
    rhs: DeclarationRhs,
}

/// A node before topological renumbering.
struct Proto {
    name: String,
    kind: NodeKind,
    variable: usize,
    elems: Range<usize>,
    decl: usize,
    seq: usize,
    line: usize,
    body: Option<NodeBody>,
}

struct Walker<'a> {
    constants: &'a NamedArrays,
    declared: HashSet<String>,
    decl_ids: HashMap<*const Declaration, usize>,
    instances: Vec<Instance>,
}

fn number_declarations(stmts: &[Statement], ids: &mut HashMap<*const Declaration, usize>) {
    for s in stmts {
        match s {
            Statement::Declaration(d) => {
                let n = ids.len();
                ids.insert(d as *const Declaration, n);
            }
            Statement::ForLoop(lp) => number_declarations(&lp.body, ids),
            Statement::IfElse(ie) => {
                number_declarations(&ie.then_branch, ids);
                if let Some(b) = &ie.else_branch {
                    number_declarations(b, ids);
                }
            }
        }
    }
}

fn declared_names(stmts: &[Statement], out: &mut HashSet<String>) {
    for s in stmts {
        match s {
            Statement::Declaration(d) => {
                out.insert(d.target.name.clone());
            }
            Statement::ForLoop(lp) => declared_names(&lp.body, out),
            Statement::IfElse(ie) => {
                declared_names(&ie.then_branch, out);
                if let Some(b) = &ie.else_branch {
                    declared_names(b, out);
                }
            }
        }
    }
}

fn subst_var_ref(r: &VarRef, env: &[(String, f64)]) -> VarRef {
    VarRef {
        name: r.name.clone(),
        indices: r
            .indices
            .iter()
            .map(|ix| match ix {
                Index::Single(e) => Index::Single(subst(e, env)),
                Index::Range(a, b) => Index::Range(subst(a, env), subst(b, env)),
                Index::All => Index::All,
            })
            .collect(),
    }
}

/// Replaces loop variables by their current values.
fn subst(e: &Expr, env: &[(String, f64)]) -> Expr {
    match e {
        Expr::Number(_) => e.clone(),
        Expr::Var(r) => {
            if r.indices.is_empty() {
                if let Some((_, v)) = env.iter().rev().find(|(n, _)| *n == r.name) {
                    return Expr::Number(*v);
                }
            }
            Expr::Var(subst_var_ref(r, env))
        }
        Expr::Unary(op, a) => Expr::Unary(*op, Box::new(subst(a, env))),
        Expr::Binary(op, a, b) => Expr::binary(*op, subst(a, env), subst(b, env)),
        Expr::Call(f, args) => Expr::Call(f.clone(), args.iter().map(|a| subst(a, env)).collect()),
    }
}

/// Replaces bare names by expressions (used for parameter transforms).
fn subst_names(e: &Expr, bindings: &HashMap<&str, &Expr>) -> Expr {
    match e {
        Expr::Var(r) if r.indices.is_empty() => match bindings.get(r.name.as_str()) {
            Some(x) => (*x).clone(),
            None => e.clone(),
        },
        Expr::Number(_) | Expr::Var(_) => e.clone(),
        Expr::Unary(op, a) => Expr::Unary(*op, Box::new(subst_names(a, bindings))),
        Expr::Binary(op, a, b) => {
            Expr::binary(*op, subst_names(a, bindings), subst_names(b, bindings))
        }
        Expr::Call(f, args) => Expr::Call(
            f.clone(),
            args.iter().map(|a| subst_names(a, bindings)).collect(),
        ),
    }
}

/// Evaluates an expression that may only involve constants.
fn eval_static(
    e: &Expr,
    constants: &NamedArrays,
    declared: &HashSet<String>,
    line: usize,
    context: &str,
) -> Result<f64> {
    let mut names = Vec::new();
    collect_names(e, &mut names);
    for n in names {
        if constants.contains_key(&n) {
            continue;
        }
        if declared.contains(&n) {
            return Err(Error::Unsupported {
                what: format!(
                    "{context} depends on model variable `{n}` (stochastic indexing and dynamic structure are not supported)"
                ),
                line: Line(Some(line)),
            });
        }
        return Err(Error::UnresolvedSymbol {
            name: n,
            line: Line(Some(line)),
        });
    }
    let lookup = |name: &str, idx: &[usize]| -> std::result::Result<f64, String> {
        let arr = &constants[name];
        match arr.get(idx) {
            Some(v) if v.is_nan() => Err(format!("`{name}` has a missing value at {idx:?}")),
            Some(v) => Ok(v),
            None => Err(format!(
                "index {idx:?} outside `{name}` (dimensions {:?})",
                arr.dims
            )),
        }
    };
    eval_expr(e, &lookup).map_err(|message| Error::InvalidIndex {
        message: format!("{context}: {message}"),
        line: Line(Some(line)),
    })
}

impl Walker<'_> {
    fn index_value(&self, e: &Expr, line: usize) -> Result<usize> {
        let v = eval_static(e, self.constants, &self.declared, line, "index")?;
        as_index(v).map_err(|message| Error::InvalidIndex {
            message,
            line: Line(Some(line)),
        })
    }

    fn walk(&mut self, stmts: &[Statement], env: &mut Vec<(String, f64)>) -> Result<()> {
        for s in stmts {
            match s {
                Statement::Declaration(d) => self.declaration(d, env)?,
                Statement::ForLoop(lp) => {
                    let line = lp.pos.line;
                    let bound = |e: &Expr| -> Result<f64> {
                        let v = eval_static(
                            &subst(e, env),
                            self.constants,
                            &self.declared,
                            line,
                            "loop bound",
                        )?;
                        if v.fract() != 0.0 || !v.is_finite() {
                            return Err(Error::InvalidIndex {
                                message: format!("loop bound {v} is not an integer"),
                                line: Line(Some(line)),
                            });
                        }
                        Ok(v)
                    };
                    let (from, to) = (bound(&lp.from)?, bound(&lp.to)?);
                    let mut i = from;
                    while i <= to {
                        env.push((lp.var.clone(), i));
                        let r = self.walk(&lp.body, env);
                        env.pop();
                        r?;
                        i += 1.0;
                    }
                }
                Statement::IfElse(ie) => {
                    let cond = subst(&ie.condition, env);
                    let v = eval_static(
                        &cond,
                        self.constants,
                        &self.declared,
                        ie.pos.line,
                        "condition",
                    )
                    .map_err(|e| match e {
                        Error::InvalidIndex { message, line } => {
                            Error::InvalidCondition { message, line }
                        }
                        Error::Unsupported { what, line } => Error::InvalidCondition {
                            message: what,
                            line,
                        },
                        other => other,
                    })?;
                    if v.is_nan() {
                        return Err(Error::InvalidCondition {
                            message: "condition evaluates to NaN".into(),
                            line: Line(Some(ie.pos.line)),
                        });
                    }
                    if v != 0.0 {
                        self.walk(&ie.then_branch, env)?;
                    } else if let Some(b) = &ie.else_branch {
                        self.walk(b, env)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn declaration(&mut self, d: &Declaration, env: &[(String, f64)]) -> Result<()> {
        let line = d.pos.line;
        let target = subst_var_ref(&d.target, env);
        let mut ranges = Vec::with_capacity(target.indices.len());
        for ix in &target.indices {
            ranges.push(match ix {
                Index::Single(e) => {
                    let i = self.index_value(e, line)?;
                    (i, i)
                }
                Index::Range(a, b) => {
                    let (lo, hi) = (self.index_value(a, line)?, self.index_value(b, line)?);
                    if lo > hi {
                        return Err(Error::InvalidIndex {
                            message: format!("empty range {lo}:{hi} in `{}`", target.name),
                            line: Line(Some(line)),
                        });
                    }
                    (lo, hi)
                }
                Index::All => {
                    return Err(Error::InvalidIndex {
                        message: format!("declaration of `{}` needs explicit indices", target.name),
                        line: Line(Some(line)),
                    })
                }
            });
        }
        let rhs = match &d.rhs {
            DeclarationRhs::Deterministic(e) => DeclarationRhs::Deterministic(subst(e, env)),
            DeclarationRhs::Stochastic(call) => {
                let mut call = call.clone();
                for a in &mut call.args {
                    a.value = subst(&a.value, env);
                }
                DeclarationRhs::Stochastic(call)
            }
        };
        self.instances.push(Instance {
            decl: self.decl_ids[&(d as *const Declaration)],
            seq: self.instances.len(),
            line,
            var: target.name,
            ranges,
            rhs,
        });
        Ok(())
    }
}

struct Compiler<'a> {
    constants: &'a NamedArrays,
    declared: HashSet<String>,
    variables: Vec<Variable>,
    var_index: HashMap<String, usize>,
    owner: Vec<Option<usize>>,
    protos: Vec<Proto>,
    /// Canonical expression text -> lifted proto index.
    lifted: HashMap<String, usize>,
}

fn node_name(var: &str, ranges: &[(usize, usize)]) -> String {
    if ranges.is_empty() {
        return var.to_string();
    }
    let parts: Vec<String> = ranges
        .iter()
        .map(|&(lo, hi)| {
            if lo == hi {
                lo.to_string()
            } else {
                format!("{lo}:{hi}")
            }
        })
        .collect();
    format!("{var}[{}]", parts.join(", "))
}

fn fnv1a(text: &str) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for b in text.bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

fn slug(e: &Expr) -> String {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    match e {
        Expr::Number(v) if v.fract() == 0.0 && (0.0..=10.0).contains(v) => {
            WORDS[*v as usize].to_string()
        }
        Expr::Number(v) => format_number(*v)
            .replace('.', "p")
            .replace('-', "m")
            .replace('+', ""),
        Expr::Var(r) => {
            let mut s = r.name.replace('.', "_");
            for ix in &r.indices {
                s.push('_');
                match ix {
                    Index::Single(e) => s.push_str(&slug(e)),
                    Index::Range(a, b) => s.push_str(&format!("{}_to_{}", slug(a), slug(b))),
                    Index::All => s.push_str("all"),
                }
            }
            s
        }
        Expr::Unary(UnaryOp::Neg, a) => format!("neg_{}", slug(a)),
        Expr::Unary(UnaryOp::Not, a) => format!("not_{}", slug(a)),
        Expr::Binary(op, a, b) => {
            let word = match op {
                BinaryOp::Add => "plus",
                BinaryOp::Sub => "minus",
                BinaryOp::Mul => "times",
                BinaryOp::Div => "over",
                BinaryOp::Pow => "pow",
                BinaryOp::Lt => "lt",
                BinaryOp::Le => "le",
                BinaryOp::Gt => "gt",
                BinaryOp::Ge => "ge",
                BinaryOp::Eq => "eq",
                BinaryOp::Ne => "ne",
                BinaryOp::And => "and",
                BinaryOp::Or => "or",
            };
            format!("{}_{word}_{}", slug(a), slug(b))
        }
        Expr::Call(f, args) => {
            let mut s = f.clone();
            for a in args {
                s.push('_');
                s.push_str(&slug(a));
            }
            s
        }
    }
}

impl Compiler<'_> {
    fn err_line(line: usize) -> Line {
        Line(Some(line))
    }

    fn index_ranges(
        &self,
        r: &VarRef,
        dims: &[usize],
        line: usize,
    ) -> Result<(Vec<(usize, usize)>, bool)> {
        if r.indices.is_empty() {
            return Ok((dims.iter().map(|&d| (1, d)).collect(), !dims.is_empty()));
        }
        // scalars may be indexed as x[1]
        let dims: Vec<usize> = if dims.is_empty() && r.indices.len() == 1 {
            vec![1]
        } else {
            dims.to_vec()
        };
        if r.indices.len() != dims.len() {
            return Err(Error::InvalidIndex {
                message: format!(
                    "`{}` has {} dimension(s), used with {} index(es)",
                    r.name,
                    dims.len(),
                    r.indices.len()
                ),
                line: Self::err_line(line),
            });
        }
        let idx = |e: &Expr| -> Result<usize> {
            let v = eval_static(e, self.constants, &self.declared, line, "index")?;
            as_index(v).map_err(|message| Error::InvalidIndex {
                message,
                line: Self::err_line(line),
            })
        };
        let mut sliced = false;
        let mut ranges = Vec::with_capacity(dims.len());
        for (ix, &d) in r.indices.iter().zip(&dims) {
            let (lo, hi) = match ix {
                Index::Single(e) => {
                    let i = idx(e)?;
                    (i, i)
                }
                Index::Range(a, b) => {
                    sliced = true;
                    (idx(a)?, idx(b)?)
                }
                Index::All => {
                    sliced = true;
                    (1, d)
                }
            };
            if lo > hi || hi > d {
                return Err(Error::InvalidIndex {
                    message: format!("index {lo}:{hi} of `{}` outside its extent 1:{d}", r.name),
                    line: Self::err_line(line),
                });
            }
            ranges.push((lo, hi));
        }
        Ok((ranges, sliced))
    }

    /// Elements addressed by a reference; the flag is set for slices.
    fn refer(&self, r: &VarRef, line: usize) -> Result<(Vec<CExpr>, bool)> {
        if let Some(arr) = self.constants.get(&r.name) {
            let (ranges, sliced) = self.index_ranges(r, &arr.dims, line)?;
            let mut out = Vec::new();
            for idx in row_major(&ranges) {
                let v = if arr.dims.is_empty() {
                    arr.values[0]
                } else {
                    arr.get(&idx).expect("checked extents")
                };
                if v.is_nan() {
                    return Err(Error::UnresolvedSymbol {
                        name: format!(
                            "{} (missing constant value)",
                            node_name(&r.name, &idx.iter().map(|&i| (i, i)).collect::<Vec<_>>())
                        ),
                        line: Self::err_line(line),
                    });
                }
                out.push(CExpr::Const(v));
            }
            return Ok((out, sliced));
        }
        let Some(&vi) = self.var_index.get(&r.name) else {
            return Err(Error::UnresolvedSymbol {
                name: r.name.clone(),
                line: Self::err_line(line),
            });
        };
        let var = &self.variables[vi];
        let (ranges, sliced) = self.index_ranges(r, &var.dims, line)?;
        let mut out = Vec::new();
        for idx in row_major(&ranges) {
            let local = if var.dims.is_empty() {
                0
            } else {
                var.local_index(&idx).expect("checked extents")
            };
            let flat = var.offset + local;
            if self.owner[flat].is_none() {
                return Err(Error::UnresolvedSymbol {
                    name: var.element_name(local),
                    line: Self::err_line(line),
                });
            }
            out.push(CExpr::Elem(flat));
        }
        Ok((out, sliced))
    }

    fn scalar(&self, e: &Expr, line: usize) -> Result<CExpr> {
        Ok(match e {
            Expr::Number(v) => CExpr::Const(*v),
            Expr::Var(r) => {
                let (mut elems, _) = self.refer(r, line)?;
                if elems.len() != 1 {
                    return Err(Error::InvalidIndex {
                        message: format!(
                            "`{}` has {} elements where a scalar is needed",
                            crate::parser::deparse_var_ref(r),
                            elems.len()
                        ),
                        line: Self::err_line(line),
                    });
                }
                elems.pop().expect("one element")
            }
            Expr::Unary(op, a) => CExpr::unary(*op, self.scalar(a, line)?),
            Expr::Binary(op, a, b) => {
                CExpr::binary(*op, self.scalar(a, line)?, self.scalar(b, line)?)
            }
            Expr::Call(name, args) => {
                if let Some(f) = ScalarFn::from_name(name) {
                    if f.arity() != args.len() {
                        return Err(Error::Unsupported {
                            what: format!(
                                "`{name}` takes {} argument(s), {} given",
                                f.arity(),
                                args.len()
                            ),
                            line: Self::err_line(line),
                        });
                    }
                    let args = args
                        .iter()
                        .map(|a| self.scalar(a, line))
                        .collect::<Result<Vec<_>>>()?;
                    CExpr::call(f, args)
                } else if let Some(r) = Reduction::from_name(name) {
                    let args = args
                        .iter()
                        .map(|a| self.vector(a, line))
                        .collect::<Result<Vec<_>>>()?;
                    if args.is_empty() || args.iter().all(Vec::is_empty) {
                        return Err(Error::Unsupported {
                            what: format!("`{name}` needs at least one element"),
                            line: Self::err_line(line),
                        });
                    }
                    if r == Reduction::Inprod && (args.len() != 2 || args[0].len() != args[1].len())
                    {
                        return Err(Error::Unsupported {
                            what: "`inprod` takes two arguments of equal length".into(),
                            line: Self::err_line(line),
                        });
                    }
                    CExpr::reduce(r, args)
                } else {
                    return Err(Error::Unsupported {
                        what: format!("unknown function `{name}`"),
                        line: Self::err_line(line),
                    });
                }
            }
        })
    }

    fn vector(&self, e: &Expr, line: usize) -> Result<Vec<CExpr>> {
        match e {
            Expr::Var(r) => Ok(self.refer(r, line)?.0),
            _ => Ok(vec![self.scalar(e, line)?]),
        }
    }

    /// Returns a store reference to a lifted node computing `value`.
    fn lift(&mut self, value: CExpr, kind: NodeKind, inst: &Instance) -> CExpr {
        let shown = cexpr_to_expr(&self.variables, &value);
        let key = deparse_expr(&shown);
        if let Some(&p) = self.lifted.get(&key) {
            return CExpr::Elem(self.protos[p].elems.start);
        }
        let mut base = slug(&shown);
        if base.len() > 40 {
            base.truncate(40);
            base = base.trim_end_matches('_').to_string();
        }
        let mut name = format!("lifted_{base}");
        if self.var_index.contains_key(&name) {
            name = format!("{name}_{:08x}", fnv1a(&key));
        }
        let flat = self.owner.len();
        let vi = self.variables.len();
        self.variables.push(Variable {
            name: name.clone(),
            dims: Vec::new(),
            offset: flat,
            lifted: true,
        });
        self.var_index.insert(name.clone(), vi);
        let p = self.protos.len();
        self.owner.push(Some(p));
        self.protos.push(Proto {
            name,
            kind,
            variable: vi,
            elems: flat..flat + 1,
            decl: inst.decl,
            seq: inst.seq,
            line: inst.line,
            body: Some(NodeBody::Deterministic(value)),
        });
        self.lifted.insert(key, p);
        CExpr::Elem(flat)
    }

    fn param_source(&self, values: &[CExpr], original: &Expr) -> ParamExpr {
        let whole_node = |elems: Vec<usize>| -> Option<usize> {
            let o = self.owner[*elems.first()?]?;
            let r = &self.protos[o].elems;
            (elems.len() == r.len() && elems.iter().zip(r.clone()).all(|(a, b)| *a == b))
                .then_some(o)
        };
        match values {
            [CExpr::Const(c)] => ParamExpr::Constant(*c),
            _ => {
                let elems: Option<Vec<usize>> = values
                    .iter()
                    .map(|v| match v {
                        CExpr::Elem(i) => Some(*i),
                        _ => None,
                    })
                    .collect();
                match elems.and_then(whole_node) {
                    Some(o) => ParamExpr::Node(o),
                    None if values.len() == 1 => {
                        ParamExpr::Expr(cexpr_to_expr(&self.variables, &values[0]))
                    }
                    None => ParamExpr::Expr(original.clone()),
                }
            }
        }
    }

    fn stochastic(
        &mut self,
        inst: &Instance,
        call: &crate::parser::DistributionCall,
        dist: &Arc<Distribution>,
        n_elems: usize,
    ) -> Result<NodeBody> {
        let spec = dist.spec();
        let line = inst.line;
        let perr = |message: String| Error::Parameterization {
            dist: spec.name.clone(),
            message,
            line: Line(Some(line)),
        };
        if spec.shape == ValueShape::Scalar && n_elems != 1 {
            return Err(perr(format!(
                "scalar distribution assigned to `{}` with {n_elems} elements",
                node_name(&inst.var, &inst.ranges)
            )));
        }
        let bound = spec
            .bind_arguments(call.args.iter().map(|a| (a.name.as_deref(), &a.value)))
            .map_err(perr)?;
        let names: Vec<&str> = bound.iter().map(|(n, _)| n.as_str()).collect();
        let alt = spec.match_parameterization(&names).map_err(perr)?;
        let bindings: HashMap<&str, &Expr> = bound.iter().map(|(n, e)| (n.as_str(), *e)).collect();

        let mut params = Vec::with_capacity(spec.canonical.len());
        let mut ranges = Vec::with_capacity(spec.canonical.len());
        let mut cursor = 0;
        for c in &spec.canonical {
            let (expr, kind) = match alt {
                None => ((*bindings[c.as_str()]).clone(), NodeKind::LiftedExpr),
                Some(alt) => {
                    let (_, t) = alt
                        .to_canonical
                        .iter()
                        .find(|(t, _)| t == c)
                        .expect("registry validates transforms");
                    (subst_names(t, &bindings), NodeKind::LiftedReparam)
                }
            };
            let mut values = if spec.shape == ValueShape::Vector && alt.is_none() {
                self.vector(&expr, line)?
            } else {
                vec![self.scalar(&expr, line)?]
            };
            if values.len() == 1 && !matches!(values[0], CExpr::Const(_) | CExpr::Elem(_)) {
                let v = values.pop().expect("one value");
                let kind = if kind == NodeKind::LiftedReparam
                    && matches!(bindings.get(c.as_str()), Some(e) if **e == expr)
                {
                    NodeKind::LiftedExpr
                } else {
                    kind
                };
                values.push(self.lift(v, kind, inst));
            }
            let source = self.param_source(&values, &expr);
            ranges.push(cursor..cursor + values.len());
            cursor += values.len();
            params.push(Param {
                name: c.clone(),
                values,
                source,
            });
        }
        Ok(NodeBody::Stochastic {
            dist: dist.clone(),
            params,
            ranges,
        })
    }
}

fn cexpr_elems(body: &NodeBody) -> Vec<usize> {
    let mut out = Vec::new();
    match body {
        NodeBody::Deterministic(e) => e.elems(&mut out),
        NodeBody::Stochastic { params, .. } => {
            for p in params {
                for v in &p.values {
                    v.elems(&mut out);
                }
            }
        }
    }
    out
}

pub(super) fn build(
    ast: &ModelAst,
    constants: &NamedArrays,
    registry: &Registry,
) -> Result<ModelDefinition> {
    let mut declared = HashSet::new();
    declared_names(&ast.statements, &mut declared);
    let mut decl_ids = HashMap::new();
    number_declarations(&ast.statements, &mut decl_ids);
    let mut walker = Walker {
        constants,
        declared: declared.clone(),
        decl_ids,
        instances: Vec::new(),
    };
    walker.walk(&ast.statements, &mut Vec::new())?;
    let instances = walker.instances;

    // variable extents are the largest index used on a left-hand side
    let mut extents: Vec<(String, Vec<usize>, usize)> = Vec::new();
    let mut ext_index: HashMap<String, usize> = HashMap::new();
    for inst in &instances {
        if constants.contains_key(&inst.var) {
            return Err(Error::ConstantRedeclared {
                name: inst.var.clone(),
                line: Line(Some(inst.line)),
            });
        }
        match ext_index.get(&inst.var) {
            Some(&i) => {
                let dims = &mut extents[i].1;
                if dims.len() != inst.ranges.len() {
                    return Err(Error::InvalidIndex {
                        message: format!(
                            "`{}` declared with {} and {} indices",
                            inst.var,
                            dims.len(),
                            inst.ranges.len()
                        ),
                        line: Line(Some(inst.line)),
                    });
                }
                for (d, &(_, hi)) in dims.iter_mut().zip(&inst.ranges) {
                    *d = (*d).max(hi);
                }
            }
            None => {
                ext_index.insert(inst.var.clone(), extents.len());
                extents.push((
                    inst.var.clone(),
                    inst.ranges.iter().map(|r| r.1).collect(),
                    inst.line,
                ));
            }
        }
    }
    let mut variables = Vec::with_capacity(extents.len());
    let mut offset = 0;
    for (name, dims, _) in extents {
        let len: usize = dims.iter().product();
        variables.push(Variable {
            name,
            dims,
            offset,
            lifted: false,
        });
        offset += len;
    }
    let var_index: HashMap<String, usize> = variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.clone(), i))
        .collect();

    let mut comp = Compiler {
        constants,
        declared,
        variables,
        var_index,
        owner: vec![None; offset],
        protos: Vec::with_capacity(instances.len()),
        lifted: HashMap::new(),
    };

    for inst in &instances {
        let vi = comp.var_index[&inst.var];
        let var = &comp.variables[vi];
        let flats: Vec<usize> = if inst.ranges.is_empty() {
            vec![var.offset]
        } else {
            row_major(&inst.ranges)
                .iter()
                .map(|idx| var.offset + var.local_index(idx).expect("within extents"))
                .collect()
        };
        let name = node_name(&inst.var, &inst.ranges);
        if flats.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Unsupported {
                what: format!(
                    "`{name}` does not cover contiguous elements of `{}`",
                    inst.var
                ),
                line: Line(Some(inst.line)),
            });
        }
        let kind = match inst.rhs {
            DeclarationRhs::Stochastic(_) => NodeKind::Stochastic,
            DeclarationRhs::Deterministic(_) => NodeKind::Deterministic,
        };
        if kind == NodeKind::Deterministic && flats.len() > 1 {
            return Err(Error::Unsupported {
                what: format!("vector-valued deterministic declaration `{name}`"),
                line: Line(Some(inst.line)),
            });
        }
        let p = comp.protos.len();
        for &f in &flats {
            if comp.owner[f].is_some() {
                return Err(Error::DoubleDeclaration {
                    element: var.element_name(f - var.offset),
                    line: Line(Some(inst.line)),
                });
            }
            comp.owner[f] = Some(p);
        }
        comp.protos.push(Proto {
            name,
            kind,
            variable: vi,
            elems: flats[0]..flats[flats.len() - 1] + 1,
            decl: inst.decl,
            seq: inst.seq,
            line: inst.line,
            body: None,
        });
    }

    for (p, inst) in instances.iter().enumerate() {
        let body = match &inst.rhs {
            DeclarationRhs::Deterministic(e) => NodeBody::Deterministic(comp.scalar(e, inst.line)?),
            DeclarationRhs::Stochastic(call) => {
                let dist = registry
                    .get(&call.name)
                    .ok_or_else(|| Error::UnknownDistribution {
                        name: call.name.clone(),
                        line: Line(Some(inst.line)),
                    })?
                    .clone();
                let n = comp.protos[p].elems.len();
                comp.stochastic(inst, call, &dist, n)?
            }
        };
        comp.protos[p].body = Some(body);
    }

    let Compiler {
        variables,
        var_index,
        owner,
        protos,
        ..
    } = comp;
    let n = protos.len();

    // edges
    let mut parents: Vec<Vec<usize>> = Vec::with_capacity(n);
    for (p, proto) in protos.iter().enumerate() {
        let mut ps: Vec<usize> = cexpr_elems(proto.body.as_ref().expect("compiled"))
            .into_iter()
            .map(|f| owner[f].expect("references are checked"))
            .collect();
        ps.sort_unstable();
        ps.dedup();
        if ps.contains(&p) {
            return Err(Error::Cycle {
                path: vec![proto.name.clone(), proto.name.clone()],
            });
        }
        parents.push(ps);
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }

    // Kahn's algorithm, ties broken by declaration then expansion order
    let key = |p: usize| {
        let pr = &protos[p];
        (pr.decl, pr.seq, usize::from(!pr.kind.is_lifted()), p)
    };
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<(usize, usize, usize, usize)>> = (0..n)
        .filter(|&p| indeg[p] == 0)
        .map(|p| Reverse(key(p)))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((_, _, _, p))) = ready.pop() {
        order.push(p);
        for &c in &children[p] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(Reverse(key(c)));
            }
        }
    }
    if order.len() < n {
        return Err(Error::Cycle {
            path: cycle_witness(&indeg, &parents, &protos),
        });
    }

    let mut pos = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        pos[old] = new;
    }
    let mut slots: Vec<Option<Proto>> = protos.into_iter().map(Some).collect();
    let mut nodes = Vec::with_capacity(n);
    let mut param_buffer_len = 0;
    for &old in &order {
        let proto = slots[old].take().expect("each node placed once");
        let mut body = proto.body.expect("compiled");
        if let NodeBody::Stochastic { params, ranges, .. } = &mut body {
            for prm in params.iter_mut() {
                if let ParamExpr::Node(o) = &mut prm.source {
                    *o = pos[*o];
                }
            }
            param_buffer_len = param_buffer_len.max(ranges.last().map_or(0, |r| r.end));
        }
        let mut ps: Vec<NodeId> = parents[old].iter().map(|&p| pos[p]).collect();
        ps.sort_unstable();
        let mut cs: Vec<NodeId> = children[old].iter().map(|&c| pos[c]).collect();
        cs.sort_unstable();
        nodes.push(Node {
            name: proto.name,
            kind: proto.kind,
            variable: proto.variable,
            elems: proto.elems,
            declaration: proto.decl,
            line: proto.line,
            parents: ps,
            children: cs,
            body,
        });
    }
    let owner: Vec<Option<NodeId>> = owner.into_iter().map(|o| o.map(|p| pos[p])).collect();
    let node_index = nodes
        .iter()
        .enumerate()
        .map(|(i, nd)| (nd.name.clone(), i))
        .collect();
    let constants: NamedArrays = constants
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect::<BTreeMap<_, _>>();

    Ok(ModelDefinition {
        nodes,
        variables,
        var_index,
        node_index,
        owner,
        constants,
        param_buffer_len,
    })
}

/// A cycle among the nodes Kahn's algorithm could not place, as a
/// parent-to-child path starting and ending at the same node.
fn cycle_witness(indeg: &[usize], parents: &[Vec<usize>], protos: &[Proto]) -> Vec<String> {
    let start = (0..indeg.len())
        .find(|&p| indeg[p] > 0)
        .expect("a stuck node");
    let mut seen: HashMap<usize, usize> = HashMap::new();
    let mut walk = vec![start];
    let mut cur = start;
    loop {
        seen.insert(cur, walk.len() - 1);
        // every stuck node has a stuck parent
        cur = *parents[cur]
            .iter()
            .find(|&&q| indeg[q] > 0)
            .expect("stuck nodes have stuck parents");
        if let Some(&i) = seen.get(&cur) {
            let mut cycle: Vec<String> =
                walk[i..].iter().map(|&q| protos[q].name.clone()).collect();
            cycle.reverse();
            cycle.push(cycle[0].clone());
            return cycle;
        }
        walk.push(cur);
    }
}
