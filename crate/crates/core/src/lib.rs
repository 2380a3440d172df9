//! Mini-batch GNN training on an abstract host/device platform.
//!
//! The crate is organised the way the pipeline runs:
//!
//! * [`graph`] stores graphs in CSR form and generates synthetic power-law graphs.
//! * [`sampler`] expands target vertices into mini-batch subgraphs (node-wise,
//!   layer-wise, subgraph-wise, optionally biased toward cached vertices).
//! * [`cache`] models the device-side feature cache.
//! * [`gnn`] is a small dense GNN used as the accuracy oracle and FLOP model.
//! * [`runtime`] simulates training epochs and emits profiling records.
//! * [`estimator`] fits the gray-box performance model on those records.
//! * [`explorer`] searches the configuration space for training guidelines.
//! * [`config`] holds the run configuration consumed by the `gnnav` binary.

pub mod cache;
pub mod config;
pub mod error;
pub mod estimator;
pub mod explorer;
pub mod gnn;
pub mod graph;
pub mod rng;
pub mod runtime;
pub mod sampler;

pub use error::{Error, Result};

/// Bytes per feature element, used for all memory and transfer accounting.
pub const FEATURE_BYTES: u64 = 4;
