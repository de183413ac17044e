//! A compiler for BUGS-dialect hierarchical models and a model-generic
//! inference engine built on it.
//!
//! Model text is parsed into a syntax tree ([`parser`]), compiled against
//! constants into a node graph ([`graph::ModelDefinition`]), and
//! instantiated as a mutable [`runtime::Model`] holding values and log
//! probabilities. Algorithms in [`algorithms`] are set up once against a
//! model and node set, then run repeatedly.

pub mod algorithms;
pub mod cli;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod functions;
pub mod graph;
pub mod parser;
pub mod runtime;

pub use error::{Error, ErrorClass, Result};
