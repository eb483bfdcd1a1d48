//! Label-noise-robust node classification with graph convolutional networks.
//!
//! A warmed-up GCN labels many randomly masked copies of the graph. The union
//! of each node's per-copy argmax classes becomes a set of likely labels and
//! the union of argmin classes a set of unlikely ones. Training then
//! maximizes the former and minimizes the latter with a weighted
//! partial-label loss, replacing the noisy supervision.

pub mod bench;
pub mod dataset;
pub mod dense;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod gcn;
pub mod graph;
pub mod loss;
pub mod metrics;
pub mod noise;
pub mod rng;
pub mod sbm;
pub mod train;

pub use error::{Error, Result};
