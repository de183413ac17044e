//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use bugsgraph::data::{Array, NamedArrays};
use bugsgraph::graph::{DependencyOptions, ModelDefinition, NodeId};
use bugsgraph::parser::*;
use bugsgraph::runtime::Model;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PUMP: &str = include_str!("../../fixtures/pump.bugs");
pub const PUMP_SCALE: &str = include_str!("../../fixtures/pump_scale.bugs");

pub fn pump_constants() -> NamedArrays {
    bugsgraph::data::parse_json(include_str!("../../fixtures/pump_constants.json")).unwrap()
}

pub fn pump_data() -> NamedArrays {
    bugsgraph::data::parse_json(include_str!("../../fixtures/pump_data.json")).unwrap()
}

pub fn pump_inits() -> NamedArrays {
    bugsgraph::data::parse_json(include_str!("../../fixtures/pump_inits.json")).unwrap()
}

pub fn pump_model(seed: u64) -> Model {
    Model::from_source(PUMP, &pump_constants(), &pump_data(), &pump_inits(), seed).unwrap()
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// A random scalar DAG model, with its structure kept independently of the
/// compiled graph.
#[derive(Debug, Clone)]
pub struct RandomDag {
    pub names: Vec<String>,
    pub parents: Vec<Vec<usize>>,
    pub stochastic: Vec<bool>,
    pub data: Vec<bool>,
    pub source: String,
    pub data_values: NamedArrays,
}

fn linear(parents: &[usize], rng: &mut ChaCha8Rng) -> String {
    if parents.is_empty() {
        return format!("{:.1}", rng.random_range(-2.0..2.0));
    }
    parents
        .iter()
        .map(|p| format!("{:.2} * v{p}", rng.random_range(0.1..0.9)))
        .collect::<Vec<_>>()
        .join(" + ")
}

fn bounded(parents: &[usize], rng: &mut ChaCha8Rng) -> String {
    // a strictly positive, moderate parameter built from the parents
    if parents.is_empty() {
        format!("{:.1}", rng.random_range(0.5..3.0))
    } else {
        format!("1 + abs(sin({}))", linear(parents, rng))
    }
}

impl RandomDag {
    /// Between 1 and `max_nodes` nodes, each drawing up to three parents
    /// from the earlier ones.
    pub fn generate(seed: u64, max_nodes: usize) -> RandomDag {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=max_nodes);
        let mut dag = RandomDag {
            names: Vec::new(),
            parents: Vec::new(),
            stochastic: Vec::new(),
            data: Vec::new(),
            source: String::from("model {\n"),
            data_values: BTreeMap::new(),
        };
        for k in 0..n {
            let mut ps: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.3)).collect();
            while ps.len() > 3 {
                ps.remove(rng.random_range(0..ps.len()));
            }
            let stoch = k == 0 || rng.random_bool(0.6);
            if !stoch && ps.is_empty() {
                ps.push(rng.random_range(0..k));
            }
            let name = format!("v{k}");
            let mut is_data = false;
            let line = if stoch {
                match rng.random_range(0..5) {
                    0 | 1 => {
                        is_data = rng.random_bool(0.3);
                        if is_data {
                            let y: f64 = rng.random_range(-3.0..3.0);
                            dag.data_values.insert(name.clone(), Array::scalar(y));
                        }
                        let sd = match ps.last() {
                            Some(&p) if rng.random_bool(0.5) => bounded(&[p], &mut rng),
                            _ => "1".to_string(),
                        };
                        format!(
                            "{name} ~ dnorm(mean = {}, sd = {sd})",
                            linear(&ps, &mut rng)
                        )
                    }
                    2 => format!(
                        "{name} ~ dgamma({}, {})",
                        bounded(&ps, &mut rng),
                        bounded(&ps, &mut rng)
                    ),
                    3 => format!("{name} ~ dexp({})", bounded(&ps, &mut rng)),
                    _ => {
                        is_data = rng.random_bool(0.5);
                        if is_data {
                            let y = rng.random_range(0..6) as f64;
                            dag.data_values.insert(name.clone(), Array::scalar(y));
                        }
                        format!("{name} ~ dpois({})", bounded(&ps, &mut rng))
                    }
                }
            } else if rng.random_bool(0.5) {
                format!("{name} <- {}", linear(&ps, &mut rng))
            } else {
                format!("{name} <- cos({})", linear(&ps, &mut rng))
            };
            dag.source.push_str("  ");
            dag.source.push_str(&line);
            dag.source.push('\n');
            dag.names.push(name);
            dag.parents.push(ps);
            dag.stochastic.push(stoch);
            dag.data.push(is_data);
        }
        dag.source.push('}');
        dag
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn definition(&self) -> Arc<ModelDefinition> {
        Arc::new(ModelDefinition::from_source(&self.source, &BTreeMap::new()).unwrap())
    }

    pub fn model(&self, seed: u64) -> Model {
        Model::new(self.definition(), &self.data_values, &BTreeMap::new(), seed).unwrap()
    }

    /// Node ids of the compiled graph, indexed by generator position.
    pub fn ids(&self, def: &ModelDefinition) -> Vec<NodeId> {
        self.names.iter().map(|n| def.node_id(n).unwrap()).collect()
    }

    /// `closure[i][j]`: a path `i -> ... -> j` of length at least one
    /// exists whose interior nodes all satisfy `allowed`.
    fn closure(&self, allowed: impl Fn(usize) -> bool) -> Vec<Vec<bool>> {
        let n = self.len();
        let mut r = vec![vec![false; n]; n];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                r[p][c] = true;
            }
        }
        for k in (0..n).filter(|&k| allowed(k)) {
            for i in 0..n {
                if r[i][k] {
                    for j in 0..n {
                        if r[k][j] {
                            r[i][j] = true;
                        }
                    }
                }
            }
        }
        r
    }

    /// Reference answer for a dependency query, in generator positions.
    pub fn dependencies_oracle(&self, from: &[usize], opts: DependencyOptions) -> Vec<usize> {
        let n = self.len();
        let reach = self.closure(|k| opts.downstream_all || !self.stochastic[k]);
        let reached: Vec<bool> = (0..n).map(|v| from.iter().any(|&f| reach[f][v])).collect();
        let within = self.closure(|k| reached[k]);
        let useful = |v: usize| {
            self.stochastic[v] || (0..n).any(|s| self.stochastic[s] && reached[s] && within[v][s])
        };
        (0..n)
            .filter(|&v| {
                let keep = if from.contains(&v) {
                    opts.include_self
                } else {
                    reached[v]
                        && (!opts.stochastic_only_terminal || useful(v))
                        && !(opts.deterministic_only && self.stochastic[v])
                };
                keep && (opts.include_data || !self.data[v])
            })
            .collect()
    }

    pub fn is_topological(&self, order: &[usize]) -> bool {
        let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        order.iter().all(|&c| {
            self.parents[c]
                .iter()
                .all(|p| pos.get(p).map_or(true, |&pp| pp < pos[&c]))
        })
    }
}

/// Every combination of the five dependency options.
pub fn all_option_combinations() -> Vec<DependencyOptions> {
    (0..32u32)
        .map(|b| DependencyOptions {
            include_self: b & 1 != 0,
            include_data: b & 2 != 0,
            stochastic_only_terminal: b & 4 != 0,
            deterministic_only: b & 8 != 0,
            downstream_all: b & 16 != 0,
        })
        .collect()
}

/// Picks a random non-empty subset of `0..n`.
pub fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
    if s.is_empty() {
        s.push(rng.random_range(0..n));
    }
    s
}

// ---- random syntax trees for the parser round trip ----

const NAMES: &[&str] = &["a", "b", "mu", "tau", "x.y", "theta_2", "N", "z1"];
const FUNCS: &[&str] = &["exp", "log", "sqrt", "pow", "inprod", "sum", "phi"];
const DISTS: &[&str] = &["dnorm", "dgamma", "dbin", "dpois", "dbeta"];
const NUMBERS: &[f64] = &[0.0, 1.0, 2.0, 0.5, 94.3, 1e-7, 2.5e20, 1.25, 1000.0, 3e-3];
const OPS: &[BinaryOp] = &[
    BinaryOp::Add,
    BinaryOp::Sub,
    BinaryOp::Mul,
    BinaryOp::Div,
    BinaryOp::Pow,
    BinaryOp::Lt,
    BinaryOp::Le,
    BinaryOp::Gt,
    BinaryOp::Ge,
    BinaryOp::Eq,
    BinaryOp::Ne,
    BinaryOp::And,
    BinaryOp::Or,
];

pub struct AstGen {
    rng: ChaCha8Rng,
}

impl AstGen {
    pub fn new(seed: u64) -> Self {
        AstGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn name(&mut self) -> String {
        NAMES.choose(&mut self.rng).unwrap().to_string()
    }

    fn var_ref(&mut self, depth: usize) -> VarRef {
        let name = self.name();
        let k = self.rng.random_range(0..3usize);
        let indices = (0..k)
            .map(|_| match self.rng.random_range(0..4) {
                0 => Index::All,
                1 => Index::Range(self.index_expr(depth), self.index_expr(depth)),
                _ => Index::Single(self.index_expr(depth)),
            })
            .collect();
        VarRef { name, indices }
    }

    /// Integer arithmetic over literals and singly indexed variables, the
    /// only form allowed inside brackets.
    fn index_expr(&mut self, depth: usize) -> Expr {
        if depth == 0 || self.rng.random_bool(0.4) {
            return if self.rng.random_bool(0.5) {
                Expr::Number(self.rng.random_range(0..20) as f64)
            } else {
                Expr::Var(VarRef::scalar(self.name()))
            };
        }
        let d = depth - 1;
        match self.rng.random_range(0..4) {
            0 => Expr::Unary(UnaryOp::Neg, Box::new(self.index_expr(d))),
            1 => Expr::Var(VarRef {
                name: self.name(),
                indices: vec![Index::Single(self.index_expr(d))],
            }),
            _ => {
                let op = *OPS[..5].choose(&mut self.rng).unwrap();
                Expr::binary(op, self.index_expr(d), self.index_expr(d))
            }
        }
    }

    pub fn expr(&mut self, depth: usize) -> Expr {
        let leaf = depth == 0 || self.rng.random_bool(0.3);
        if leaf {
            return if self.rng.random_bool(0.5) {
                Expr::Number(*NUMBERS.choose(&mut self.rng).unwrap())
            } else {
                Expr::Var(VarRef::scalar(self.name()))
            };
        }
        let d = depth - 1;
        match self.rng.random_range(0..6) {
            0 => Expr::Var(self.var_ref(d)),
            1 => {
                let op = if self.rng.random_bool(0.7) {
                    UnaryOp::Neg
                } else {
                    UnaryOp::Not
                };
                Expr::Unary(op, Box::new(self.expr(d)))
            }
            2 => {
                let f = FUNCS.choose(&mut self.rng).unwrap().to_string();
                let k = self.rng.random_range(1..3);
                Expr::Call(f, (0..k).map(|_| self.expr(d)).collect())
            }
            _ => {
                let op = *OPS.choose(&mut self.rng).unwrap();
                Expr::binary(op, self.expr(d), self.expr(d))
            }
        }
    }

    fn declaration(&mut self) -> Declaration {
        let target = self.var_ref(1);
        let rhs = if self.rng.random_bool(0.5) {
            let k = self.rng.random_range(0..4);
            let named = self.rng.random_bool(0.4);
            let args = (0..k)
                .map(|i| Argument {
                    name: named.then(|| format!("p{i}")),
                    value: self.expr(3),
                })
                .collect();
            DeclarationRhs::Stochastic(DistributionCall {
                name: DISTS.choose(&mut self.rng).unwrap().to_string(),
                args,
            })
        } else {
            DeclarationRhs::Deterministic(self.expr(4))
        };
        Declaration {
            target,
            rhs,
            pos: SourcePos::default(),
        }
    }

    fn block(&mut self, depth: usize) -> Vec<Statement> {
        let k = self.rng.random_range(1..4);
        (0..k).map(|_| self.statement(depth)).collect()
    }

    fn statement(&mut self, depth: usize) -> Statement {
        if depth == 0 || self.rng.random_bool(0.6) {
            return Statement::Declaration(self.declaration());
        }
        if self.rng.random_bool(0.6) {
            Statement::ForLoop(ForLoop {
                var: ["i", "j", "k"].choose(&mut self.rng).unwrap().to_string(),
                from: self.expr(1),
                to: self.expr(2),
                body: self.block(depth - 1),
                pos: SourcePos::default(),
            })
        } else {
            let then_branch = self.block(depth - 1);
            let else_branch = self.rng.random_bool(0.5).then(|| self.block(depth - 1));
            Statement::IfElse(IfElse {
                condition: self.expr(2),
                then_branch,
                else_branch,
                pos: SourcePos::default(),
            })
        }
    }

    pub fn model(&mut self) -> ModelAst {
        ModelAst {
            statements: self.block(3),
        }
    }
}

/// True when `parse(deparse(ast)) == ast`; otherwise the deparsed text and
/// the failure.
pub fn round_trips(ast: &ModelAst) -> Result<(), String> {
    let text = deparse_model(ast);
    match parse_model(&text) {
        Ok(back) if &back == ast => Ok(()),
        Ok(back) => Err(format!(
            "{text}\n--- reparsed as ---\n{}",
            deparse_model(&back)
        )),
        Err(e) => Err(format!("{text}\n--- failed: {e}")),
    }
}

// ---- analytic references ----

/// Log of the gamma-Poisson (negative binomial) marginal probability of
/// count `x` with exposure `t` under a gamma(shape `a`, rate `b`) rate.
pub fn log_negbin_marginal(x: f64, t: f64, a: f64, b: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(x + a) - ln_gamma(a) - ln_gamma(x + 1.0)
        + a * (b / (b + t)).ln()
        + x * (t / (b + t)).ln()
}

/// Posterior mean and sd of `mu` for `y[i] ~ N(mu, sigma^2)` with prior
/// `mu ~ N(m0, s0^2)`.
pub fn normal_normal_posterior(y: &[f64], sigma: f64, m0: f64, s0: f64) -> (f64, f64) {
    let prec = 1.0 / (s0 * s0) + y.len() as f64 / (sigma * sigma);
    let mean = (m0 / (s0 * s0) + y.iter().sum::<f64>() / (sigma * sigma)) / prec;
    (mean, prec.sqrt().recip())
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Source and data for `y[1:n] ~ N(mu, 1)`, `mu ~ N(0, 10^2)`.
pub fn normal_normal_model(y: &[f64]) -> (String, NamedArrays) {
    let src = format!(
        "model {{\n  mu ~ dnorm(mean = 0, sd = 10)\n  for (i in 1:{}) {{\n    y[i] ~ dnorm(mean = mu, sd = 1)\n  }}\n}}",
        y.len()
    );
    let mut data = BTreeMap::new();
    data.insert("y".to_string(), Array::vector(y.to_vec()));
    (src, data)
}

/// Two-sample Kolmogorov-Smirnov statistic of `sample` against the
/// standard normal distribution function.
pub fn ks_standard_normal(sample: &[f64]) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::standard();
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let len = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = n.cdf(x);
            (f - i as f64 / len)
                .abs()
                .max(((i + 1) as f64 / len - f).abs())
        })
        .fold(0.0, f64::max)
}
