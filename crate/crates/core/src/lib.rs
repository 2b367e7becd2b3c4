//! Transformer-based representation learning on temporal directed
//! multigraphs, with message passing over both the graph and its typed
//! edge-to-node dual, for edge classification.

pub mod data;
pub mod dual;
pub mod error;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
