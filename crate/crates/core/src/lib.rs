//! Multilayer substation graphs for grid reliability analytics.
//!
//! The crate covers the whole pipeline:
//!
//! - [`ingest`]: cleaning incident logs, fuzzy identifier reconciliation, voltage imputation
//! - [`graphbuild`]: spatial, temporal and causal edge layers plus node features
//! - [`labeling`]: leakage-free predictive-maintenance targets
//! - [`diffkernel`]: a small dense reverse-mode autodiff tape
//! - [`gnn`]: GATv2/GATv2/GIN encoders with attention fusion and focal-loss training
//! - [`riskcluster`]: risk-aware embeddings, HDBSCAN and cluster validation
//! - [`baselines`]: random forest, gradient boosting, k-means and spectral clustering
//! - [`synthgen`]: seeded synthetic scenarios with planted ground truth

pub mod baselines;
pub mod diffkernel;
pub mod error;
pub mod gnn;
pub mod graphbuild;
pub mod ingest;
pub mod labeling;
pub mod linalg;
pub mod riskcluster;
pub mod stats;
pub mod synthgen;

pub use error::{Error, Result};
