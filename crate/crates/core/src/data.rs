//! Named numeric arrays and the JSON format used for constants, data and
//! initial values.
//!
//! A file is a JSON object mapping names to values. A value is a number, a
//! (possibly nested, rectangular) array of numbers listed in row-major
//! order, or an object `{"dim": [..], "data": [..]}` with `data` in
//! row-major order. `null` marks a missing entry.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// A dense row-major array; `dims` is empty for a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl Array {
    pub fn scalar(v: f64) -> Self {
        Array {
            dims: Vec::new(),
            values: vec![v],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Array {
            dims: vec![values.len()],
            values,
        }
    }

    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != values.len() {
            return Err(Error::InvalidArgument(format!(
                "dimensions {dims:?} need {n} values, got {}",
                values.len()
            )));
        }
        Ok(Array { dims, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major offset of a 1-based multi-index.
    pub fn offset(&self, idx: &[usize]) -> Option<usize> {
        // a length-one array may be used as a scalar and vice versa
        if (idx.is_empty() && self.values.len() == 1) || (self.dims.is_empty() && idx == [1]) {
            return Some(0);
        }
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

    pub fn get(&self, idx: &[usize]) -> Option<f64> {
        self.offset(idx).map(|o| self.values[o])
    }
}

pub type NamedArrays = BTreeMap<String, Array>;

fn number(v: &Value, name: &str) -> Result<f64> {
    match v {
        Value::Null => Ok(f64::NAN),
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::Config(format!("`{name}`: number out of range"))),
        other => Err(Error::Config(format!(
            "`{name}`: expected a number or null, found {other}"
        ))),
    }
}

struct Shape {
    dims: Vec<usize>,
    leaf_depth: Option<usize>,
}

fn flatten(
    v: &Value,
    name: &str,
    depth: usize,
    shape: &mut Shape,
    out: &mut Vec<f64>,
) -> Result<()> {
    let ragged = || Error::Config(format!("`{name}`: ragged nested array"));
    let dims = &mut shape.dims;
    match v {
        Value::Array(items) => {
            if shape.leaf_depth.is_some_and(|d| d <= depth) {
                return Err(ragged());
            }
            if dims.len() == depth {
                dims.push(items.len());
            } else if dims.len() < depth || dims[depth] != items.len() {
                return Err(ragged());
            }
            for item in items {
                flatten(item, name, depth + 1, shape, out)?;
            }
            Ok(())
        }
        _ => {
            if dims.len() != depth || shape.leaf_depth.is_some_and(|d| d != depth) {
                return Err(ragged());
            }
            shape.leaf_depth = Some(depth);
            out.push(number(v, name)?);
            Ok(())
        }
    }
}

fn parse_value(name: &str, v: &Value) -> Result<Array> {
    match v {
        Value::Object(map) => {
            let dims = map
                .get("dim")
                .and_then(Value::as_array)
                .ok_or_else(|| {
                    Error::Config(format!("`{name}`: object values need a `dim` array"))
                })?
                .iter()
                .map(|d| {
                    d.as_u64()
                        .map(|d| d as usize)
                        .ok_or_else(|| Error::Config(format!("`{name}`: bad dimension {d}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let data = map
                .get("data")
                .and_then(Value::as_array)
                .ok_or_else(|| {
                    Error::Config(format!("`{name}`: object values need a `data` array"))
                })?
                .iter()
                .map(|x| number(x, name))
                .collect::<Result<Vec<_>>>()?;
            Array::new(dims, data).map_err(|e| Error::Config(format!("`{name}`: {e}")))
        }
        Value::Array(_) => {
            let mut shape = Shape {
                dims: Vec::new(),
                leaf_depth: None,
            };
            let mut values = Vec::new();
            flatten(v, name, 0, &mut shape, &mut values)?;
            Ok(Array {
                dims: shape.dims,
                values,
            })
        }
        _ => Ok(Array::scalar(number(v, name)?)),
    }
}

pub fn parse_json(text: &str) -> Result<NamedArrays> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    let Value::Object(map) = root else {
        return Err(Error::Config(
            "top-level JSON value must be an object".into(),
        ));
    };
    map.iter()
        .map(|(k, v)| Ok((k.clone(), parse_value(k, v)?)))
        .collect()
}

pub fn read_json(path: impl AsRef<Path>) -> Result<NamedArrays> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_json(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
