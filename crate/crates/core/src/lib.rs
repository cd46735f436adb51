//! Node-private release of whole networks.
//!
//! A network is split into a release block and a hold-out block. Latent
//! positions are estimated on the hold-out block, release nodes are embedded
//! one at a time against those fixed estimates, the release embeddings are
//! pushed through a distribution-invariant privatization chain, and a fresh
//! network is drawn from the privatized positions.
//!
//! Module map:
//!
//! - [`graph`]: adjacency storage, edge-list I/O, release/hold-out partitioning
//! - [`latent`]: link functions, Bernoulli sampling, synthetic generators
//! - [`holdout`]: spectral embedding and likelihood fitting on the hold-out block
//! - [`nodewise`]: per-node logistic / least-squares estimation
//! - [`dip`]: conditional CDF model and the privatization chain
//! - [`release`]: the end-to-end mechanism and the comparison baselines
//! - [`metrics`]: local statistics, motif densities, Wasserstein-1

pub mod dip;
pub mod error;
pub mod graph;
pub mod holdout;
pub mod latent;
pub mod linalg;
pub mod metrics;
pub mod nodewise;
pub mod release;
pub mod seed;

pub use error::{Error, Result};
pub use graph::{BitMatrix, Graph, PartitionedGraph};
pub use latent::{LatentEmbedding, ModelKind, ModelVariant};
