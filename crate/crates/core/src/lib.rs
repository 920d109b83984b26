//! Hierarchical randomized design for detecting interference between units
//! of a networked experiment.
//!
//! Units are grouped into balanced graph clusters. Clusters are split at
//! random between a completely randomized arm and a cluster-randomized arm,
//! and treatment is drawn independently inside each arm. Under no
//! interference both arms estimate the same total treatment effect, so the
//! difference of the two estimates (`delta`) is centred at zero; a large
//! `|delta|` relative to a conservative variance bound is evidence of
//! interference.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: immutable undirected graphs, edge-list ingestion and
//!   stochastic block model generation.
//! * [`partition`]: balanced clustering (restreaming linear deterministic
//!   greedy), clustering metrics, stratification and cluster subsampling.
//! * [`assign`]: every randomization mechanism used by the design.
//! * [`outcomes`]: potential-outcome tables and the linear interference model.
//! * [`estimate`]: estimators, variance bounds, p-values and decisions.
//! * [`oracle`]: exhaustive enumeration of small designs and exact moments.
//! * [`sim`]: Monte Carlo studies (variance ratio, power, type I error).

pub mod assign;
pub mod error;
pub mod estimate;
pub mod graph;
pub mod oracle;
pub mod outcomes;
pub mod partition;
pub mod seed;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use graph::{Graph, SbmSpec};
pub use partition::{Clustering, ClusteringMetrics};
pub use seed::SeedStream;
