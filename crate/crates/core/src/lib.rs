//! Construction, search, and merging of HNSW graph indices, instrumented
//! so that every metric evaluation is counted against a named phase.
//!
//! The crate provides:
//!
//! * layered graph storage and standard insertion-based construction,
//! * the single-layer beam search and hierarchical search it builds on,
//! * pluggable neighborhood construction (k-NN and RNG pruning),
//! * four ways to combine two indices over disjoint id sets — re-insertion
//!   (`sigm`) and the layer-wise merges `ngm`, `igtm`, and `cgtm` — all
//!   reporting their cost in distance computations,
//! * benchmark drivers measuring merge cost against the search quality of
//!   the merged index, and fvecs/ivecs/index-file persistence.

pub mod build;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod merge;
pub mod neighborhood;
pub mod search;
pub mod vecstore;

pub use build::{build_index, sigm_merge, BuildParams};
pub use error::{Error, Result};
pub use eval::{GroundTruth, MergeJob, MergeKind, SplitSpec, SweepReport, SweepRow};
pub use graph::{HnswIndex, IndexStats, LayerGraph};
pub use merge::{general_merge, MergeAlgo, MergeParams};
pub use neighborhood::NeighborhoodStrategy;
pub use search::{hnsw_search, local_search, SearchParams};
pub use vecstore::{Dataset, DistanceMeter, Metric, Neighbor, VectorId};
