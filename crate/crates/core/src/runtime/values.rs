use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{ModelDefinition, NodeId, Variable};
use crate::parser::{parse_var_ref, Index};

use super::Model;

const LOGPROB_PREFIX: &str = "logProb_";

/// A table of value sets: each row holds every variable of the schema,
/// and optionally the stored log probabilities of its nodes.
///
/// Rows are 1-based in every public method.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelValues {
    vars: Vec<Variable>,
    index: HashMap<String, usize>,
    /// Variable name -> index of its log-probability variable.
    logprob: HashMap<String, usize>,
    width: usize,
    rows: usize,
    data: Vec<f64>,
}

impl ModelValues {
    /// A container over explicit variables given as `(name, dims)`.
    pub fn with_variables(vars: &[(&str, Vec<usize>)], rows: usize) -> Result<Self> {
        let mut out = ModelValues {
            vars: Vec::new(),
            index: HashMap::new(),
            logprob: HashMap::new(),
            width: 0,
            rows: 0,
            data: Vec::new(),
        };
        for (name, dims) in vars {
            out.push_var(name, dims.clone())?;
        }
        out.resize(rows);
        Ok(out)
    }

    /// Every variable of a definition (lifted storage included), laid out
    /// exactly like the model's value store.
    pub fn from_definition(def: &ModelDefinition, rows: usize, log_probs: bool) -> Self {
        let names: Vec<&str> = def.variables().iter().map(|v| v.name.as_str()).collect();
        Self::for_variables(def, &names, rows, log_probs).expect("variables exist")
    }

    /// A subset of a definition's variables.
    pub fn for_variables<S: AsRef<str>>(
        def: &ModelDefinition,
        names: &[S],
        rows: usize,
        log_probs: bool,
    ) -> Result<Self> {
        let mut out = Self::with_variables(&[], 0)?;
        for name in names {
            let name = name.as_ref();
            let v = def
                .variable(name)
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
            out.push_var(&v.name, v.dims.clone())?;
        }
        if log_probs {
            for name in names {
                let name = name.as_ref();
                let dims = def.variable(name).expect("checked").dims.clone();
                let lp = out.push_var(&format!("{LOGPROB_PREFIX}{name}"), dims)?;
                out.logprob.insert(name.to_string(), lp);
            }
        }
        out.resize(rows);
        Ok(out)
    }

    fn push_var(&mut self, name: &str, dims: Vec<usize>) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::SchemaMismatch(format!(
                "variable `{name}` listed twice"
            )));
        }
        if self.rows > 0 {
            return Err(Error::SchemaMismatch(
                "schema is fixed once rows exist".into(),
            ));
        }
        let v = Variable {
            name: name.to_string(),
            dims,
            offset: self.width,
            lifted: false,
        };
        self.width += v.len();
        self.index.insert(name.to_string(), self.vars.len());
        self.vars.push(v);
        Ok(self.vars.len() - 1)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.index.get(name).map(|&i| &self.vars[i])
    }

    pub fn has_log_probs(&self, var: &str) -> bool {
        self.logprob.contains_key(var)
    }

    /// Grows with zero rows or truncates; existing rows are preserved.
    pub fn resize(&mut self, rows: usize) {
        self.rows = rows;
        self.data.resize(rows * self.width, 0.0);
    }

    fn check_row(&self, row: usize) -> Result<usize> {
        if row == 0 || row > self.rows {
            return Err(Error::RowOutOfRange {
                row,
                rows: self.rows,
            });
        }
        Ok((row - 1) * self.width)
    }

    pub fn row(&self, row: usize) -> Result<&[f64]> {
        let start = self.check_row(row)?;
        Ok(&self.data[start..start + self.width])
    }

    pub fn row_mut(&mut self, row: usize) -> Result<&mut [f64]> {
        let start = self.check_row(row)?;
        Ok(&mut self.data[start..start + self.width])
    }

    /// Values of one variable in one row.
    pub fn get(&self, var: &str, row: usize) -> Result<&[f64]> {
        let v = self
            .variable(var)
            .ok_or_else(|| Error::UnknownVariable(var.to_string()))?;
        Ok(&self.row(row)?[v.range()])
    }

    pub fn set(&mut self, var: &str, row: usize, values: &[f64]) -> Result<()> {
        let v = self
            .variable(var)
            .ok_or_else(|| Error::UnknownVariable(var.to_string()))?;
        let range = v.range();
        if values.len() != range.len() {
            return Err(Error::ShapeMismatch {
                name: var.to_string(),
                expected: range.len(),
                found: values.len(),
            });
        }
        self.row_mut(row)?[range].copy_from_slice(values);
        Ok(())
    }

    /// Column names in storage order, e.g. `theta[1]`.
    pub fn column_names(&self) -> Vec<String> {
        self.vars
            .iter()
            .flat_map(|v| (0..v.len()).map(move |i| v.element_name(i)))
            .collect()
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        let r =
            parse_var_ref(name).map_err(|e| Error::InvalidArgument(format!("`{name}`: {e}")))?;
        let v = self
            .variable(&r.name)
            .ok_or_else(|| Error::UnknownVariable(r.name.clone()))?;
        let mut idx = Vec::with_capacity(r.indices.len());
        for ix in &r.indices {
            match ix {
                Index::Single(crate::parser::Expr::Number(k)) if k.fract() == 0.0 && *k >= 1.0 => {
                    idx.push(*k as usize)
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "`{name}` is not a single element"
                    )))
                }
            }
        }
        let local = if v.dims.is_empty() && idx.is_empty() {
            Some(0)
        } else {
            v.local_index(&idx)
        };
        local
            .map(|l| v.offset + l)
            .ok_or_else(|| Error::OutOfBounds {
                spec: name.to_string(),
                message: format!("outside dimensions {:?}", v.dims),
            })
    }

    /// One element across all rows, by element name.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column_index(name)?;
        Ok((0..self.rows)
            .map(|r| self.data[r * self.width + c])
            .collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.column_names())?;
        let mut buf = Vec::with_capacity(self.width);
        for r in 0..self.rows {
            buf.clear();
            buf.extend(
                self.data[r * self.width..(r + 1) * self.width]
                    .iter()
                    .map(|v| format_value(*v)),
            );
            w.write_record(&buf)?;
        }
        w.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads a table written by [`ModelValues::write_csv`]; variable
    /// extents are inferred from the largest index in each column name.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let mut order: Vec<String> = Vec::new();
        let mut dims: HashMap<String, Vec<usize>> = HashMap::new();
        let mut parsed = Vec::with_capacity(header.len());
        for h in &header {
            let r = parse_var_ref(h)
                .map_err(|e| Error::SchemaMismatch(format!("column `{h}`: {e}")))?;
            let idx: Vec<usize> = r
                .indices
                .iter()
                .map(|ix| match ix {
                    Index::Single(crate::parser::Expr::Number(k))
                        if k.fract() == 0.0 && *k >= 1.0 =>
                    {
                        Ok(*k as usize)
                    }
                    _ => Err(Error::SchemaMismatch(format!(
                        "column `{h}` is not an element name"
                    ))),
                })
                .collect::<Result<_>>()?;
            match dims.get_mut(&r.name) {
                Some(d) => {
                    if d.len() != idx.len() {
                        return Err(Error::SchemaMismatch(format!(
                            "inconsistent indices for `{}`",
                            r.name
                        )));
                    }
                    for (a, b) in d.iter_mut().zip(&idx) {
                        *a = (*a).max(*b);
                    }
                }
                None => {
                    order.push(r.name.clone());
                    dims.insert(r.name.clone(), idx.clone());
                }
            }
            parsed.push((r.name, idx));
        }
        let vars: Vec<(&str, Vec<usize>)> = order
            .iter()
            .map(|n| (n.as_str(), dims[n].clone()))
            .collect();
        let mut mv = ModelValues::with_variables(&vars, 0)?;
        for name in &order {
            if let Some(base) = name.strip_prefix(LOGPROB_PREFIX) {
                if let Some(&i) = mv.index.get(name) {
                    mv.logprob.insert(base.to_string(), i);
                }
            }
        }
        let cols: Vec<usize> = parsed
            .iter()
            .map(|(n, idx)| {
                let v = mv.variable(n).expect("registered");
                v.offset
                    + if idx.is_empty() {
                        0
                    } else {
                        v.local_index(idx).expect("within")
                    }
            })
            .collect();
        if cols.len() != mv.width {
            return Err(Error::SchemaMismatch(
                "columns do not cover every element".into(),
            ));
        }
        for record in rd.records() {
            let record = record?;
            let start = mv.data.len();
            mv.data.resize(start + mv.width, f64::NAN);
            for (field, &c) in record.iter().zip(&cols) {
                mv.data[start + c] = parse_value(field)?;
            }
            mv.rows += 1;
        }
        Ok(mv)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file =
            std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Shortest text that parses back to the same value.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else if v == f64::INFINITY {
        "Inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-Inf".to_string()
    } else {
        format!("{v}")
    }
}

fn parse_value(s: &str) -> Result<f64> {
    match s.trim() {
        "NA" | "NaN" | "" => Ok(f64::NAN),
        "Inf" => Ok(f64::INFINITY),
        "-Inf" => Ok(f64::NEG_INFINITY),
        t => t
            .parse()
            .map_err(|_| Error::SchemaMismatch(format!("`{t}` is not a number"))),
    }
}

/// Precomputed element and log-probability correspondences between a
/// model and a container for a fixed node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyPlan {
    /// (model store index, container column)
    elems: Vec<(usize, usize)>,
    /// (node, container column)
    log_probs: Vec<(NodeId, usize)>,
}

impl CopyPlan {
    pub fn new(
        def: &ModelDefinition,
        mv: &ModelValues,
        nodes: &[NodeId],
        log_prob: bool,
    ) -> Result<Self> {
        let mut elems = Vec::new();
        let mut log_probs = Vec::new();
        for &n in nodes {
            if n >= def.len() {
                return Err(Error::UnknownNode(format!("#{n}")));
            }
            let node = def.node(n);
            let var = &def.variables()[node.variable];
            let col_var = mv.variable(&var.name).ok_or_else(|| {
                Error::SchemaMismatch(format!("container has no variable `{}`", var.name))
            })?;
            if col_var.dims != var.dims {
                return Err(Error::SchemaMismatch(format!(
                    "`{}` has dimensions {:?} in the container and {:?} in the model",
                    var.name, col_var.dims, var.dims
                )));
            }
            for e in node.elems.clone() {
                elems.push((e, col_var.offset + (e - var.offset)));
            }
            if log_prob && node.is_stochastic() {
                let &lp = mv.logprob.get(&var.name).ok_or_else(|| {
                    Error::SchemaMismatch(format!(
                        "container stores no log probabilities for `{}`",
                        var.name
                    ))
                })?;
                let lp_var = &mv.vars[lp];
                log_probs.push((n, lp_var.offset + (node.elems.start - var.offset)));
            }
        }
        Ok(CopyPlan { elems, log_probs })
    }

    pub fn model_to_values(&self, model: &Model, mv: &mut ModelValues, row: usize) -> Result<()> {
        let dst = mv.row_mut(row)?;
        for &(e, c) in &self.elems {
            dst[c] = model.values[e];
        }
        for &(n, c) in &self.log_probs {
            dst[c] = model.log_probs[n];
        }
        Ok(())
    }

    pub fn values_to_model(&self, mv: &ModelValues, row: usize, model: &mut Model) -> Result<()> {
        let src = mv.row(row)?;
        for &(e, c) in &self.elems {
            model.values[e] = src[c];
        }
        for &(n, c) in &self.log_probs {
            model.log_probs[n] = src[c];
        }
        Ok(())
    }

    /// Copies between two containers sharing this plan's layout.
    pub fn values_to_values(
        &self,
        from: &ModelValues,
        row_from: usize,
        to: &mut ModelValues,
        row_to: usize,
    ) -> Result<()> {
        if from.width != to.width || from.vars != to.vars {
            return Err(Error::SchemaMismatch(
                "containers have different layouts".into(),
            ));
        }
        let start = from.check_row(row_from)?;
        let src = from.data[start..start + from.width].to_vec();
        let dst = to.row_mut(row_to)?;
        for &(_, c) in self.elems.iter().chain(&self.log_probs) {
            dst[c] = src[c];
        }
        Ok(())
    }
}

/// Source of a copy; container rows are 1-based.
pub enum CopySource<'a> {
    Model(&'a Model),
    Values(&'a ModelValues, usize),
}

/// Destination of a copy; container rows are 1-based.
pub enum CopyTarget<'a> {
    Model(&'a mut Model),
    Values(&'a mut ModelValues, usize),
}

/// Copies the values of `nodes` (and with `log_prob`, their stored log
/// probabilities) between models and containers.
pub fn copy(
    def: &ModelDefinition,
    from: CopySource<'_>,
    to: CopyTarget<'_>,
    nodes: &[NodeId],
    log_prob: bool,
) -> Result<()> {
    match (from, to) {
        (CopySource::Model(m), CopyTarget::Values(mv, row)) => {
            CopyPlan::new(def, mv, nodes, log_prob)?.model_to_values(m, mv, row)
        }
        (CopySource::Values(mv, row), CopyTarget::Model(m)) => {
            CopyPlan::new(def, mv, nodes, log_prob)?.values_to_model(mv, row, m)
        }
        (CopySource::Values(a, ra), CopyTarget::Values(b, rb)) => {
            let plan = CopyPlan::new(def, a, nodes, log_prob)?;
            CopyPlan::new(def, b, nodes, log_prob)?;
            plan.values_to_values(a, ra, b, rb)
        }
        (CopySource::Model(a), CopyTarget::Model(b)) => {
            if a.definition().store_len() != b.definition().store_len() {
                return Err(Error::SchemaMismatch(
                    "models have different layouts".into(),
                ));
            }
            for &n in nodes {
                if n >= def.len() {
                    return Err(Error::UnknownNode(format!("#{n}")));
                }
                for e in def.node(n).elems.clone() {
                    b.values[e] = a.values[e];
                }
                if log_prob {
                    b.log_probs[n] = a.log_probs[n];
                }
            }
            Ok(())
        }
    }
}
