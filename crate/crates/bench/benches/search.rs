use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};

use hnsw_merge::build::build_index;
use hnsw_merge::search::hnsw_search;
use hnsw_merge::vecstore::{distance, MeteredDistance};
use hnsw_merge::{BuildParams, DistanceMeter, Metric, NeighborhoodStrategy, VectorId};
use hnsw_merge_bench::dataset;

fn bench_distance(c: &mut Criterion) {
    let base = dataset(64, 1);
    let meter = DistanceMeter::new();
    c.bench_function("metered_distance_128d", |bencher| {
        bencher.iter(|| {
            black_box(
                distance(
                    &meter,
                    "bench",
                    VectorId(3),
                    VectorId(40),
                    &base,
                    Metric::SquaredEuclidean,
                )
                .unwrap(),
            )
        })
    });
}

fn bench_search(c: &mut Criterion) {
    let n = 4000;
    let base = dataset(n, 7);
    let params = BuildParams::new(16, 32, 32, 7).unwrap();
    let ids: Vec<VectorId> = base.ids().collect();
    let index = build_index(
        &base,
        &ids,
        params,
        NeighborhoodStrategy::Rng,
        Metric::SquaredEuclidean,
        &DistanceMeter::new(),
    )
    .unwrap();
    let queries = dataset(64, 8);

    let mut group = c.benchmark_group(format!("hnsw_search_{n}"));
    group.sample_size(20).measurement_time(Duration::from_secs(8));
    for l in [16usize, 64] {
        group.bench_function(format!("L{l}"), |bencher| {
            let meter = DistanceMeter::new();
            let eval = MeteredDistance::new(&base, Metric::SquaredEuclidean, &meter, "bench");
            let mut next = 0u32;
            bencher.iter(|| {
                let q = queries.vector(VectorId(next % 64));
                next = next.wrapping_add(1);
                black_box(
                    hnsw_search(&index, q, index.entry().unwrap(), 5, l, 0, &eval).unwrap(),
                )
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_distance, bench_search);
criterion_main!(benches);
