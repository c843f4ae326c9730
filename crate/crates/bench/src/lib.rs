//! Shared fixtures for the criterion benchmarks.

use hnsw_merge::build::build_index;
use hnsw_merge::eval::synthetic_mixture;
use hnsw_merge::{BuildParams, Dataset, DistanceMeter, HnswIndex, Metric, NeighborhoodStrategy, VectorId};

pub const DIM: usize = 128;

pub fn dataset(n: usize, seed: u64) -> Dataset {
    synthetic_mixture(n, DIM, 16, seed)
}

pub fn built_pair(n_per_side: usize, seed: u64) -> (Dataset, HnswIndex, HnswIndex) {
    let base = dataset(2 * n_per_side, seed);
    let params = BuildParams::new(16, 32, 32, seed).unwrap();
    let ids: Vec<VectorId> = base.ids().collect();
    let meter = DistanceMeter::new();
    let a = build_index(
        &base,
        &ids[..n_per_side],
        params,
        NeighborhoodStrategy::Rng,
        Metric::SquaredEuclidean,
        &meter,
    )
    .unwrap();
    let b = build_index(
        &base,
        &ids[n_per_side..],
        params,
        NeighborhoodStrategy::Rng,
        Metric::SquaredEuclidean,
        &meter,
    )
    .unwrap();
    (base, a, b)
}
