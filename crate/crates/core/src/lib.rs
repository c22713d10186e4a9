//! Node classification on discrete dynamic graphs with temporal hypergraphs.
//!
//! The pipeline embeds every snapshot with a shared GNN backbone, links
//! `(node, slice)` vertices into hyperedges by nearest neighbours across
//! nearby slices, propagates over those hyperedges with distance-weighted
//! messages and hyperedge attention, and classifies the result. During
//! training a second, per-class hypergraph over clustered class prototypes
//! adds a supervised auxiliary loss.
//!
//! Modules, bottom-up:
//!
//! - [`numcore`]: matrices, the gradient tape, gradient checks, RNG.
//! - [`dyngraph`]: snapshot data model, text dataset format, drifting SBM.
//! - [`backbone`]: GCN and GraphSAGE layers applied per snapshot.
//! - [`hyperbuild`]: temporal KNN hyperedges, k-means, class prototypes.
//! - [`hyperprop`]: incidence matrices, spectral and attention propagation.
//! - [`trainer`]: losses, joint training, prediction and metrics.

pub mod backbone;
pub mod dyngraph;
pub mod error;
pub mod hyperbuild;
pub mod hyperprop;
pub mod numcore;
pub mod trainer;

pub use error::{Error, Result};
