use std::fmt;

use thiserror::Error;

use crate::parser::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Source line attached to build errors, when one is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Line(pub Option<usize>);

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(line) => write!(f, " (line {line})"),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("unresolved symbol `{name}`{line}: supply it as a constant or declare it")]
    UnresolvedSymbol { name: String, line: Line },

    #[error("cycle detected: {}", path.join(" -> "))]
    Cycle { path: Vec<String> },

    #[error("element `{element}` is declared more than once{line}")]
    DoubleDeclaration { element: String, line: Line },

    #[error("`{name}` is supplied as a constant but also declared in the model{line}")]
    ConstantRedeclared { name: String, line: Line },

    #[error("unknown distribution `{name}`{line}")]
    UnknownDistribution { name: String, line: Line },

    #[error("distribution `{dist}`: {message}{line}")]
    Parameterization {
        dist: String,
        message: String,
        line: Line,
    },

    #[error("invalid index: {message}{line}")]
    InvalidIndex { message: String, line: Line },

    #[error("unsupported: {what}{line}")]
    Unsupported { what: String, line: Line },

    #[error("invalid condition: {message}{line}")]
    InvalidCondition { message: String, line: Line },

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("index out of bounds in `{spec}`: {message}")]
    OutOfBounds { spec: String, message: String },

    #[error("unknown node filter `{0}`")]
    UnknownFilter(String),

    #[error("invalid parameters for `{dist}`: {message}")]
    InvalidParameters { dist: String, message: String },

    #[error("distribution `{0}` is already registered")]
    DuplicateDistribution(String),

    #[error("shape mismatch for `{name}`: expected {expected} values, found {found}")]
    ShapeMismatch {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("initial state has log probability -inf at node `{node}`")]
    InvalidInitialState { node: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("row {row} out of range (container has {rows} rows)")]
    RowOutOfRange { row: usize, rows: usize },

    #[error("invalid sampler target: {0}")]
    InvalidSampler(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate chain: {0}")]
    Degenerate(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse error classes, used by the command-line front-end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Model,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Parse(_)
            | UnresolvedSymbol { .. }
            | Cycle { .. }
            | DoubleDeclaration { .. }
            | ConstantRedeclared { .. }
            | UnknownDistribution { .. }
            | Parameterization { .. }
            | InvalidIndex { .. }
            | Unsupported { .. }
            | InvalidCondition { .. }
            | DuplicateDistribution(_)
            | ShapeMismatch { .. }
            | InvalidInitialState { .. } => ErrorClass::Model,
            UnknownVariable(_)
            | UnknownNode(_)
            | OutOfBounds { .. }
            | UnknownFilter(_)
            | SchemaMismatch(_)
            | RowOutOfRange { .. }
            | InvalidSampler(_)
            | InvalidArgument(_)
            | Config(_)
            | Io { .. }
            | Csv(_) => ErrorClass::Usage,
            InvalidParameters { .. } | Degenerate(_) | Numeric(_) => ErrorClass::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
