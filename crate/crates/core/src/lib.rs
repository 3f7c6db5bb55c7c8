//! Fault diagnosis for three-phase induction machines with window graphs.
//!
//! The pipeline runs: [`sim`] synthesizes labeled recordings, [`preprocess`]
//! filters and augments them, [`features`] turns each window into a feature
//! vector, [`graph`] links windows into a per-recording graph, [`model`]
//! trains the graph network, and [`eval`] scores it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;

pub mod eval;
pub mod features;
pub mod graph;
pub mod io;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod preprocess;
pub mod sim;

pub use error::{Error, Result};
