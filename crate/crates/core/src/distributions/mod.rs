//! Distribution registry: log densities, simulation, canonical
//! parameterizations and the transforms from alternative ones.
//!
//! Every distribution has one canonical parameter set, which is what its
//! density and simulation functions receive. Alternative parameterizations
//! are declared as expressions mapping the alternative names onto canonical
//! parameters (`rate = 1 / scale`); the graph compiler substitutes the
//! declared argument expressions into those transforms.
//!
//! `dnorm` follows the BUGS convention for positional arguments: the second
//! positional argument is the *precision* `tau`, not the standard deviation.
//! Use `dnorm(mu, sd = s)` for the canonical form.

mod builtin;

use std::borrow::Cow;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::functions::eval_expr;
use crate::parser::{parse_expr, Expr};

/// The set of values a distribution puts mass on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Real,
    /// (0, inf)
    Positive,
    /// [0, inf)
    NonNegative,
    /// [0, 1]
    UnitInterval,
    /// Bounded by parameter values, e.g. `dunif(min, max)`.
    Interval,
    NonNegativeInteger,
    /// 0..=n for a size parameter n.
    BoundedInteger,
    RealVector,
    Simplex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueShape {
    Scalar,
    /// Length fixed by the declared node, e.g. `y[1:3]`.
    Vector,
}

/// An alternative parameter set and the expressions (over its names) that
/// produce each canonical parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameterization {
    pub params: Vec<String>,
    pub to_canonical: Vec<(String, Expr)>,
}

impl Parameterization {
    /// Builds a parameterization from `(canonical, "expression")` pairs.
    ///
    /// # Panics
    /// If an expression fails to parse; these are written by programmers.
    pub fn new(params: &[&str], transforms: &[(&str, &str)]) -> Self {
        Parameterization {
            params: params.iter().map(|s| s.to_string()).collect(),
            to_canonical: transforms
                .iter()
                .map(|(c, e)| {
                    (
                        c.to_string(),
                        parse_expr(e).expect("transform expression must parse"),
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistributionSpec {
    pub name: String,
    /// Canonical parameters, in the order density functions receive them.
    pub canonical: Vec<String>,
    /// Names that positional arguments bind to, in order.
    pub positional: Vec<String>,
    pub alternatives: Vec<Parameterization>,
    pub support: Support,
    pub discrete: bool,
    pub shape: ValueShape,
}

impl DistributionSpec {
    /// A scalar distribution whose positional arguments are its canonical
    /// parameters and that has no alternative parameterizations.
    pub fn scalar(name: &str, canonical: &[&str], support: Support) -> Self {
        let canonical: Vec<String> = canonical.iter().map(|s| s.to_string()).collect();
        DistributionSpec {
            name: name.to_string(),
            positional: canonical.clone(),
            canonical,
            alternatives: Vec::new(),
            support,
            discrete: matches!(
                support,
                Support::NonNegativeInteger | Support::BoundedInteger
            ),
            shape: ValueShape::Scalar,
        }
    }

    pub fn with_positional(mut self, names: &[&str]) -> Self {
        self.positional = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_alternative(mut self, alt: Parameterization) -> Self {
        self.alternatives.push(alt);
        self
    }

    pub fn with_shape(mut self, shape: ValueShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn param_index(&self, canonical: &str) -> Option<usize> {
        self.canonical.iter().position(|p| p == canonical)
    }

    /// Binds positional and named arguments to parameter names.
    pub fn bind_arguments<'a, T>(
        &self,
        args: impl IntoIterator<Item = (Option<&'a str>, T)>,
    ) -> std::result::Result<Vec<(String, T)>, String> {
        let mut bound: Vec<(String, T)> = Vec::new();
        let mut next_positional = 0;
        for (name, value) in args {
            let name = match name {
                Some(n) => n.to_string(),
                None => {
                    // positional slots already filled by name are skipped
                    while next_positional < self.positional.len()
                        && bound
                            .iter()
                            .any(|(b, _)| *b == self.positional[next_positional])
                    {
                        next_positional += 1;
                    }
                    let Some(n) = self.positional.get(next_positional) else {
                        return Err(format!(
                            "too many positional arguments (at most {})",
                            self.positional.len()
                        ));
                    };
                    next_positional += 1;
                    n.clone()
                }
            };
            if bound.iter().any(|(b, _)| *b == name) {
                return Err(format!("parameter `{name}` given twice"));
            }
            bound.push((name, value));
        }
        Ok(bound)
    }

    /// Finds the parameterization matching exactly the given names. `None`
    /// in the result means the canonical set.
    pub fn match_parameterization(
        &self,
        given: &[&str],
    ) -> std::result::Result<Option<&Parameterization>, String> {
        let given_set: HashSet<&str> = given.iter().copied().collect();
        let same = |names: &[String]| {
            names.len() == given_set.len() && names.iter().all(|n| given_set.contains(n.as_str()))
        };
        if same(&self.canonical) {
            return Ok(None);
        }
        let matches: Vec<&Parameterization> = self
            .alternatives
            .iter()
            .filter(|alt| same(&alt.params))
            .collect();
        match matches.as_slice() {
            [one] => Ok(Some(one)),
            [] => {
                let mut sets = vec![format!("({})", self.canonical.join(", "))];
                sets.extend(
                    self.alternatives
                        .iter()
                        .map(|a| format!("({})", a.params.join(", "))),
                );
                Err(format!(
                    "parameters ({}) match no parameterization; expected one of {}",
                    given.join(", "),
                    sets.join(", ")
                ))
            }
            _ => Err(format!("parameters ({}) are ambiguous", given.join(", "))),
        }
    }
}

/// Parameter values handed to density and simulation functions, in
/// canonical order. Each parameter is a slice; scalar parameters have
/// length one.
#[derive(Debug, Clone, Copy)]
pub struct Params<'a> {
    data: &'a [f64],
    ranges: &'a [Range<usize>],
}

impl<'a> Params<'a> {
    pub fn new(data: &'a [f64], ranges: &'a [Range<usize>]) -> Self {
        Params { data, ranges }
    }

    #[inline]
    pub fn scalar(&self, i: usize) -> f64 {
        self.data[self.ranges[i].start]
    }

    #[inline]
    pub fn vector(&self, i: usize) -> &'a [f64] {
        &self.data[self.ranges[i].clone()]
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

/// Rejection of parameter values outside the valid space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidParams(pub Cow<'static, str>);

impl fmt::Display for InvalidParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type LogDensityFn =
    dyn Fn(&[f64], &Params<'_>) -> std::result::Result<f64, InvalidParams> + Send + Sync;
pub type SimulateFn = dyn Fn(&Params<'_>, &mut dyn RngCore, &mut [f64]) -> std::result::Result<(), InvalidParams>
    + Send
    + Sync;

pub struct Distribution {
    spec: DistributionSpec,
    log_density: Box<LogDensityFn>,
    simulate: Box<SimulateFn>,
}

impl fmt::Debug for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Distribution")
            .field("spec", &self.spec)
            .finish_non_exhaustive()
    }
}

impl Distribution {
    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Log density or mass; `-inf` outside the support.
    #[inline]
    pub fn log_density(
        &self,
        value: &[f64],
        params: &Params<'_>,
    ) -> std::result::Result<f64, InvalidParams> {
        (self.log_density)(value, params)
    }

    #[inline]
    pub fn simulate_into(
        &self,
        params: &Params<'_>,
        rng: &mut dyn RngCore,
        out: &mut [f64],
    ) -> std::result::Result<(), InvalidParams> {
        (self.simulate)(params, rng, out)
    }
}

/// Named distributions available to the model compiler.
#[derive(Clone)]
pub struct Registry {
    dists: BTreeMap<String, Arc<Distribution>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.dists.keys()).finish()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

fn scalar_ranges(n: usize) -> Vec<Range<usize>> {
    (0..n).map(|i| i..i + 1).collect()
}

impl Registry {
    /// An empty registry.
    pub fn empty() -> Self {
        Registry {
            dists: BTreeMap::new(),
        }
    }

    /// `dnorm`, `dgamma`, `dexp`, `dpois`, `dbin`, `dbeta`, `dunif`.
    pub fn with_builtins() -> Self {
        let mut r = Registry::empty();
        builtin::register_all(&mut r);
        r
    }

    pub fn register<L, S>(
        &mut self,
        spec: DistributionSpec,
        log_density: L,
        simulate: S,
    ) -> Result<()>
    where
        L: Fn(&[f64], &Params<'_>) -> std::result::Result<f64, InvalidParams>
            + Send
            + Sync
            + 'static,
        S: Fn(&Params<'_>, &mut dyn RngCore, &mut [f64]) -> std::result::Result<(), InvalidParams>
            + Send
            + Sync
            + 'static,
    {
        if self.dists.contains_key(&spec.name) {
            return Err(Error::DuplicateDistribution(spec.name));
        }
        self.register_override(spec, log_density, simulate)
    }

    /// Registers, replacing any existing distribution of the same name.
    pub fn register_override<L, S>(
        &mut self,
        spec: DistributionSpec,
        log_density: L,
        simulate: S,
    ) -> Result<()>
    where
        L: Fn(&[f64], &Params<'_>) -> std::result::Result<f64, InvalidParams>
            + Send
            + Sync
            + 'static,
        S: Fn(&Params<'_>, &mut dyn RngCore, &mut [f64]) -> std::result::Result<(), InvalidParams>
            + Send
            + Sync
            + 'static,
    {
        validate_spec(&spec)?;
        self.dists.insert(
            spec.name.clone(),
            Arc::new(Distribution {
                spec,
                log_density: Box::new(log_density),
                simulate: Box::new(simulate),
            }),
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Distribution>> {
        self.dists.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.dists.keys().map(String::as_str)
    }

    fn lookup(&self, name: &str) -> Result<&Arc<Distribution>> {
        self.get(name).ok_or_else(|| Error::UnknownDistribution {
            name: name.to_string(),
            line: Default::default(),
        })
    }

    /// Log density of a scalar value under canonical scalar parameters.
    pub fn log_density(&self, name: &str, value: f64, canonical: &[f64]) -> Result<f64> {
        let dist = self.lookup(name)?;
        check_arity(dist, canonical.len())?;
        let ranges = scalar_ranges(canonical.len());
        dist.log_density(&[value], &Params::new(canonical, &ranges))
            .map_err(|e| Error::InvalidParameters {
                dist: name.to_string(),
                message: e.0.into_owned(),
            })
    }

    /// One scalar draw under canonical scalar parameters.
    pub fn simulate(&self, name: &str, canonical: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        let dist = self.lookup(name)?;
        check_arity(dist, canonical.len())?;
        let ranges = scalar_ranges(canonical.len());
        let mut out = [0.0];
        dist.simulate_into(&Params::new(canonical, &ranges), rng, &mut out)
            .map_err(|e| Error::InvalidParameters {
                dist: name.to_string(),
                message: e.0.into_owned(),
            })?;
        Ok(out[0])
    }

    /// Maps named scalar parameter values in any registered parameterization
    /// to canonical values, returned in canonical order.
    pub fn to_canonical(&self, name: &str, given: &[(&str, f64)]) -> Result<Vec<(String, f64)>> {
        let dist = self.lookup(name)?;
        let spec = dist.spec();
        let names: Vec<&str> = given.iter().map(|(n, _)| *n).collect();
        let param_err = |message: String| Error::Parameterization {
            dist: name.to_string(),
            message,
            line: Default::default(),
        };
        if names.iter().collect::<HashSet<_>>().len() != names.len() {
            return Err(param_err("duplicate parameter name".into()));
        }
        let alt = spec.match_parameterization(&names).map_err(param_err)?;
        let lookup = |n: &str, idx: &[usize]| -> std::result::Result<f64, String> {
            if !idx.is_empty() {
                return Err(format!("indexed parameter `{n}`"));
            }
            given
                .iter()
                .find(|(g, _)| *g == n)
                .map(|(_, v)| *v)
                .ok_or_else(|| format!("unknown parameter `{n}`"))
        };
        spec.canonical
            .iter()
            .map(|c| {
                let value = match alt {
                    None => lookup(c, &[]),
                    Some(alt) => {
                        let (_, e) = alt
                            .to_canonical
                            .iter()
                            .find(|(t, _)| t == c)
                            .expect("validated at registration");
                        eval_expr(e, &lookup)
                    }
                }
                .map_err(param_err)?;
                Ok((c.clone(), value))
            })
            .collect()
    }
}

fn check_arity(dist: &Distribution, n: usize) -> Result<()> {
    if dist.spec.canonical.len() != n {
        return Err(Error::Parameterization {
            dist: dist.spec.name.clone(),
            message: format!(
                "expected {} canonical parameters ({}), got {n}",
                dist.spec.canonical.len(),
                dist.spec.canonical.join(", ")
            ),
            line: Default::default(),
        });
    }
    Ok(())
}

fn validate_spec(spec: &DistributionSpec) -> Result<()> {
    let bad = |message: String| {
        Err(Error::Parameterization {
            dist: spec.name.clone(),
            message,
            line: Default::default(),
        })
    };
    let canonical: HashSet<&str> = spec.canonical.iter().map(String::as_str).collect();
    if canonical.len() != spec.canonical.len() {
        return bad("duplicate canonical parameter".into());
    }
    let known: HashSet<&str> = spec
        .alternatives
        .iter()
        .flat_map(|a| a.params.iter().map(String::as_str))
        .chain(canonical.iter().copied())
        .collect();
    for p in &spec.positional {
        if !known.contains(p.as_str()) {
            return bad(format!("positional name `{p}` is not a parameter"));
        }
    }
    for alt in &spec.alternatives {
        let targets: HashSet<&str> = alt.to_canonical.iter().map(|(c, _)| c.as_str()).collect();
        if targets != canonical || alt.to_canonical.len() != canonical.len() {
            return bad(format!(
                "parameterization ({}) must define each canonical parameter exactly once",
                alt.params.join(", ")
            ));
        }
        for (_, e) in &alt.to_canonical {
            let mut names = Vec::new();
            collect_names(e, &mut names);
            if let Some(n) = names.iter().find(|n| !alt.params.contains(n)) {
                return bad(format!("transform refers to unknown parameter `{n}`"));
            }
        }
    }
    Ok(())
}

pub(crate) fn collect_names(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Number(_) => {}
        Expr::Var(r) => out.push(r.name.clone()),
        Expr::Unary(_, inner) => collect_names(inner, out),
        Expr::Binary(_, l, r) => {
            collect_names(l, out);
            collect_names(r, out);
        }
        Expr::Call(_, args) => args.iter().for_each(|a| collect_names(a, out)),
    }
}
