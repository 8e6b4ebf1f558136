//! Static detection of synthetic ad clicks.
//!
//! The pipeline runs over packages written in a small three-address IR:
//!
//! 1. [`gate`] keeps packages that can show ads and picks their ad views;
//! 2. [`dataflow`] builds per-method CFGs, the call graph and def-use chains;
//! 3. [`slicer`] finds synthetic click sites and slices their coordinate and
//!    guard operands backwards into data-dependency graphs;
//! 4. [`features`] counts seven structural features per site and weights
//!    them with the entropy weight method;
//! 5. [`detector`] scores the weighted vectors with a variational
//!    autoencoder trained on benign sites only.
//!
//! [`corpus`] generates labeled synthetic packages and [`pipeline`] wires
//! the stages together for training, scanning and evaluation.

pub mod config;
pub mod corpus;
pub mod dataflow;
pub mod detector;
pub mod features;
pub mod gate;
pub mod ir;
pub mod pipeline;
pub mod slicer;
