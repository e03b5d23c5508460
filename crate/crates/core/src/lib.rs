//! Personalized PageRank propagation of neural predictions.
//!
//! Semi-supervised node classification on sparse graphs: a node-wise neural
//! predictor generates class logits from features, and a personalized
//! PageRank operator (exact dense solve or sparse power iteration) spreads
//! them over the graph before the softmax. The crate also ships the
//! evaluation machinery around the models: split sampling with a strict
//! visible/test firewall, patience-based early stopping, run matrices over
//! seed grids, bootstrap confidence intervals and paired t-tests.

pub mod error;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod model;
pub mod neural;
pub mod propagation;
pub mod sparse;
pub mod stats;

pub use error::{Error, Result};
pub use graph::{Graph, NormalizedAdjacency, SbmConfig};
pub use propagation::{ExactPpr, IterativePpr, PropagationMode};
