//! Ground truth, recall@k, and the benchmark drivers that measure merge
//! cost against the search quality of the merged index.
//!
//! Cost is counted in distance computations, never wall clock, so results
//! are independent of implementation details. Merge-phase and search-phase
//! meters are kept separate: each merge job gets a fresh meter, and each
//! sweep point gets a fresh meter for its "search" phase.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::build::{build_index, sigm_merge, BuildParams};
use crate::error::{Error, Result};
use crate::graph::HnswIndex;
use crate::merge::{general_merge, MergeAlgo, MergeParams};
use crate::neighborhood::NeighborhoodStrategy;
use crate::search::hnsw_search;
use crate::vecstore::{
    brute_force_knn, phases, Dataset, DistanceMeter, Metric, MeteredDistance, VectorId,
};

/// Per-query lists of the true k nearest ids, ascending by true distance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    k: usize,
    lists: Vec<Vec<VectorId>>,
}

impl GroundTruth {
    pub fn from_lists(k: usize, lists: Vec<Vec<VectorId>>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        for (i, list) in lists.iter().enumerate() {
            if list.len() != k {
                return Err(Error::invalid(format!(
                    "ground-truth list {} has {} ids, expected {}",
                    i,
                    list.len(),
                    k
                )));
            }
            let mut dedup = list.clone();
            dedup.sort();
            dedup.dedup();
            if dedup.len() != k {
                return Err(Error::invalid(format!(
                    "ground-truth list {i} contains duplicate ids"
                )));
            }
        }
        Ok(GroundTruth { k, lists })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn query_count(&self) -> usize {
        self.lists.len()
    }

    pub fn list(&self, query: usize) -> &[VectorId] {
        &self.lists[query]
    }

    pub fn lists(&self) -> &[Vec<VectorId>] {
        &self.lists
    }
}

/// Exact k-NN per query via the metered brute-force scan, phase
/// "ground_truth".
pub fn ground_truth(
    base: &Dataset,
    queries: &Dataset,
    k: usize,
    metric: Metric,
    meter: &DistanceMeter,
) -> Result<GroundTruth> {
    if queries.dim() != base.dim() {
        return Err(Error::invalid(format!(
            "query dim {} does not match base dim {}",
            queries.dim(),
            base.dim()
        )));
    }
    let mut lists = Vec::with_capacity(queries.len());
    for q in queries.ids() {
        let found = brute_force_knn(
            queries.vector(q),
            base,
            k,
            metric,
            meter,
            phases::GROUND_TRUTH,
        )?;
        lists.push(found.into_iter().map(|n| n.id).collect());
    }
    GroundTruth::from_lists(k, lists)
}

/// Mean over queries of |truth ∩ answer| / k. Short answer lists are
/// allowed and simply score their misses.
pub fn recall_at_k(truth: &GroundTruth, answers: &[Vec<VectorId>], k: usize) -> Result<f64> {
    if k != truth.k() {
        return Err(Error::invalid(format!(
            "recall k = {} does not match ground-truth k = {}",
            k,
            truth.k()
        )));
    }
    if answers.len() != truth.query_count() {
        return Err(Error::invalid(format!(
            "{} answer lists for {} queries",
            answers.len(),
            truth.query_count()
        )));
    }
    if truth.query_count() == 0 {
        return Err(Error::invalid("recall over zero queries"));
    }
    let mut total = 0.0;
    for (list, answer) in truth.lists().iter().zip(answers) {
        let hits = answer.iter().filter(|id| list.contains(id)).count();
        total += hits as f64 / k as f64;
    }
    Ok(total / truth.query_count() as f64)
}

/// One sweep measurement: recall and mean per-query search cost at beam `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub l: usize,
    pub recall: f64,
    pub avg_search_dc: f64,
}

/// Runs every query at each beam width with a fresh "search" meter and
/// scores recall@k against `truth`.
pub fn search_sweep(
    h: &HnswIndex,
    dataset: &Dataset,
    metric: Metric,
    queries: &Dataset,
    truth: &GroundTruth,
    k: usize,
    beams: &[usize],
) -> Result<Vec<SweepPoint>> {
    let entry = h
        .entry()
        .ok_or_else(|| Error::not_found("sweep over an empty index"))?;
    if queries.len() != truth.query_count() {
        return Err(Error::invalid(format!(
            "{} queries but ground truth covers {}",
            queries.len(),
            truth.query_count()
        )));
    }
    let mut points = Vec::with_capacity(beams.len());
    for &l in beams {
        let meter = DistanceMeter::new();
        let eval = MeteredDistance::new(dataset, metric, &meter, phases::SEARCH);
        let mut answers = Vec::with_capacity(queries.len());
        for q in queries.ids() {
            let found = hnsw_search(h, queries.vector(q), entry, k, l.max(k), 0, &eval)?;
            answers.push(found.into_iter().map(|n| n.id).collect::<Vec<_>>());
        }
        let recall = recall_at_k(truth, &answers, k)?;
        let avg = meter.count(phases::SEARCH) as f64 / queries.len() as f64;
        points.push(SweepPoint {
            l,
            recall,
            avg_search_dc: avg,
        });
    }
    Ok(points)
}

/// How to split the base set into the two build partitions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub fraction: f64,
}

impl SplitSpec {
    pub fn new(fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::invalid(format!(
                "split fraction {fraction} must lie in (0, 1)"
            )));
        }
        Ok(SplitSpec { fraction })
    }

    /// Number of ids in the first partition of an `n`-vector base set.
    pub fn cut(&self, n: usize) -> usize {
        ((n as f64 * self.fraction).floor() as usize).clamp(1, n.saturating_sub(1))
    }
}

/// One merge configuration to benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct MergeJob {
    pub label: String,
    pub kind: MergeKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MergeKind {
    /// Insertion baseline, driven by the benchmark's build parameters.
    Sigm,
    Layered(MergeAlgo, MergeParams),
}

impl MergeJob {
    pub fn sigm() -> Self {
        MergeJob {
            label: "sigm".to_string(),
            kind: MergeKind::Sigm,
        }
    }

    pub fn layered(algo: MergeAlgo, params: MergeParams) -> Self {
        MergeJob {
            label: algo.name().to_string(),
            kind: MergeKind::Layered(algo, params),
        }
    }
}

/// One row of the benchmark report.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub algorithm: String,
    pub merge_dc: u64,
    pub l: usize,
    pub recall_at_k: f64,
    pub avg_search_dc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    /// Free-form `key=value` context recorded as a comment line in the CSV.
    pub context: String,
    pub rows: Vec<SweepRow>,
}

/// Full benchmark protocol: split the base set, build both indices, run
/// every merge job, and sweep search quality over the merged index.
///
/// Ground truth is computed here (phase "ground_truth") unless supplied.
/// Each job's merge runs with a fresh meter, so its "merge" count is
/// attributable to that job alone.
#[allow(clippy::too_many_arguments)]
pub fn merge_benchmark(
    base: &Dataset,
    queries: &Dataset,
    supplied_truth: Option<&GroundTruth>,
    metric: Metric,
    split: SplitSpec,
    build: BuildParams,
    strategy: NeighborhoodStrategy,
    jobs: &[MergeJob],
    k: usize,
    beams: &[usize],
) -> Result<SweepReport> {
    if base.len() < 2 {
        return Err(Error::invalid("benchmark needs at least two base vectors"));
    }
    let cut = split.cut(base.len());
    let ids: Vec<VectorId> = base.ids().collect();
    let (ids_a, ids_b) = ids.split_at(cut);

    let build_meter = DistanceMeter::new();
    let h_a = build_index(base, ids_a, build, strategy, metric, &build_meter)?;
    let h_b = build_index(base, ids_b, build, strategy, metric, &build_meter)?;

    let computed;
    let truth = match supplied_truth {
        Some(t) => t,
        None => {
            computed = ground_truth(base, queries, k, metric, &DistanceMeter::new())?;
            &computed
        }
    };

    let mut rows = Vec::new();
    for job in jobs {
        let merge_meter = DistanceMeter::new();
        let merged = match &job.kind {
            MergeKind::Sigm => {
                sigm_merge(&h_a, &h_b, base, metric, build, strategy, &merge_meter)?
            }
            MergeKind::Layered(algo, params) => general_merge(
                &h_a,
                &h_b,
                *algo,
                *params,
                strategy,
                base,
                metric,
                &merge_meter,
            )?,
        };
        let merge_dc = merge_meter.count(phases::MERGE);
        for point in search_sweep(&merged, base, metric, queries, truth, k, beams)? {
            rows.push(SweepRow {
                algorithm: job.label.clone(),
                merge_dc,
                l: point.l,
                recall_at_k: point.recall,
                avg_search_dc: point.avg_search_dc,
            });
        }
    }

    let context = format!(
        "seed={}, split={}, n={}, queries={}, metric={}, M={}, M0={}, efc={}, k={}",
        build.seed,
        split.fraction,
        base.len(),
        queries.len(),
        metric.name(),
        build.m,
        build.m0,
        build.ef_construction,
        k
    );
    Ok(SweepReport { context, rows })
}

/// Seeded Gaussian-mixture dataset: `clusters` centers with unit-variance
/// points around them. Deterministic for a fixed seed.
pub fn synthetic_mixture(n: usize, dim: usize, clusters: usize, seed: u64) -> Dataset {
    assert!(dim > 0 && clusters > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| {
            (0..dim)
                .map(|_| 2.0 * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng))
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let center = &centers[rng.random_range(0..clusters)];
        for &c in center {
            let noise: f64 = normal.sample(&mut rng);
            data.push((c + noise) as f32);
        }
    }
    Dataset::new(dim, data).expect("generated data is rectangular")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(raw: &[u32]) -> Vec<VectorId> {
        raw.iter().copied().map(VectorId).collect()
    }

    #[test]
    fn recall_formula_cases() {
        let truth = GroundTruth::from_lists(5, vec![ids(&[0, 1, 2, 3, 4])]).unwrap();
        assert_eq!(recall_at_k(&truth, &[ids(&[0, 1, 2, 3, 4])], 5).unwrap(), 1.0);
        assert_eq!(recall_at_k(&truth, &[ids(&[9, 10, 11, 12, 13])], 5).unwrap(), 0.0);
        // 3 of 5 correct
        assert_eq!(recall_at_k(&truth, &[ids(&[0, 1, 2, 9, 10])], 5).unwrap(), 0.6);
        // short answers count the misses
        assert_eq!(recall_at_k(&truth, &[ids(&[0])], 5).unwrap(), 0.2);
    }

    #[test]
    fn recall_k_mismatch_is_rejected() {
        let truth = GroundTruth::from_lists(2, vec![ids(&[0, 1])]).unwrap();
        assert!(recall_at_k(&truth, &[ids(&[0, 1])], 3).is_err());
        assert!(recall_at_k(&truth, &[], 2).is_err());
    }

    #[test]
    fn ground_truth_lists_validated() {
        assert!(GroundTruth::from_lists(2, vec![ids(&[0])]).is_err());
        assert!(GroundTruth::from_lists(2, vec![ids(&[3, 3])]).is_err());
        assert!(GroundTruth::from_lists(2, vec![ids(&[3, 4])]).is_ok());
    }

    #[test]
    fn ground_truth_matches_independent_full_sort() {
        let base = synthetic_mixture(400, 6, 4, 31);
        let queries = synthetic_mixture(25, 6, 4, 32);
        let k = 5;
        let meter = DistanceMeter::new();
        let truth = ground_truth(&base, &queries, k, Metric::default(), &meter).unwrap();
        assert_eq!(meter.count(phases::GROUND_TRUTH), (400 * 25) as u64);

        // independent route: raw component arithmetic and a full sort
        for qi in queries.ids() {
            let q = queries.vector(qi);
            let mut scored: Vec<(f64, u32)> = base
                .ids()
                .map(|v| {
                    let d: f64 = base
                        .vector(v)
                        .iter()
                        .zip(q)
                        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
                        .sum();
                    (d, v.0)
                })
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<VectorId> = scored.iter().take(k).map(|&(_, v)| VectorId(v)).collect();
            assert_eq!(truth.list(qi.index()), want.as_slice());
        }
    }

    #[test]
    fn exhaustive_beam_sweep_reaches_full_recall() {
        let base = synthetic_mixture(150, 4, 3, 9);
        let queries = synthetic_mixture(10, 4, 3, 10);
        let k = 3;
        let build = BuildParams::new(6, 12, 24, 1).unwrap();
        let all: Vec<VectorId> = base.ids().collect();
        let h = build_index(
            &base,
            &all,
            build,
            NeighborhoodStrategy::Rng,
            Metric::default(),
            &DistanceMeter::new(),
        )
        .unwrap();
        let truth =
            ground_truth(&base, &queries, k, Metric::default(), &DistanceMeter::new()).unwrap();
        let points = search_sweep(
            &h,
            &base,
            Metric::default(),
            &queries,
            &truth,
            k,
            &[base.len()],
        )
        .unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].recall, 1.0);
    }

    #[test]
    fn sweep_recall_trend_over_beams() {
        let base = synthetic_mixture(800, 8, 8, 12);
        let queries = synthetic_mixture(40, 8, 8, 13);
        let k = 5;
        let build = BuildParams::new(8, 16, 24, 2).unwrap();
        let all: Vec<VectorId> = base.ids().collect();
        let h = build_index(
            &base,
            &all,
            build,
            NeighborhoodStrategy::Rng,
            Metric::default(),
            &DistanceMeter::new(),
        )
        .unwrap();
        let truth =
            ground_truth(&base, &queries, k, Metric::default(), &DistanceMeter::new()).unwrap();
        let beams = [8, 16, 32, 64, 96];
        let points = search_sweep(&h, &base, Metric::default(), &queries, &truth, k, &beams)
            .unwrap();
        assert_eq!(points.len(), beams.len());
        // recall does not degrade with a wider beam (within noise)
        let first = points.first().unwrap().recall;
        let last = points.last().unwrap().recall;
        assert!(last >= first - 0.01, "recall fell from {first} to {last}");
        // distance cost strictly grows with the beam
        assert!(points.windows(2).all(|w| w[0].avg_search_dc < w[1].avg_search_dc));
    }

    #[test]
    fn split_cut_bounds() {
        let split = SplitSpec::new(0.5).unwrap();
        assert_eq!(split.cut(20000), 10000);
        assert_eq!(split.cut(3), 1);
        assert!(SplitSpec::new(0.0).is_err());
        assert!(SplitSpec::new(1.0).is_err());
    }

    #[test]
    fn sigm_only_benchmark_equals_manual_run() {
        let base = synthetic_mixture(300, 6, 4, 40);
        let queries = synthetic_mixture(20, 6, 4, 41);
        let k = 5;
        let beams = [16, 32];
        let build = BuildParams::new(6, 12, 16, 77).unwrap();
        let split = SplitSpec::new(0.5).unwrap();

        let report = merge_benchmark(
            &base,
            &queries,
            None,
            Metric::default(),
            split,
            build,
            NeighborhoodStrategy::Rng,
            &[MergeJob::sigm()],
            k,
            &beams,
        )
        .unwrap();

        // replicate by hand
        let ids: Vec<VectorId> = base.ids().collect();
        let (ids_a, ids_b) = ids.split_at(split.cut(base.len()));
        let m = DistanceMeter::new();
        let h_a = build_index(&base, ids_a, build, NeighborhoodStrategy::Rng, Metric::default(), &m)
            .unwrap();
        let h_b = build_index(&base, ids_b, build, NeighborhoodStrategy::Rng, Metric::default(), &m)
            .unwrap();
        let merge_meter = DistanceMeter::new();
        let merged = sigm_merge(
            &h_a,
            &h_b,
            &base,
            Metric::default(),
            build,
            NeighborhoodStrategy::Rng,
            &merge_meter,
        )
        .unwrap();
        let truth =
            ground_truth(&base, &queries, k, Metric::default(), &DistanceMeter::new()).unwrap();
        let points =
            search_sweep(&merged, &base, Metric::default(), &queries, &truth, k, &beams).unwrap();

        assert_eq!(report.rows.len(), points.len());
        for (row, point) in report.rows.iter().zip(&points) {
            assert_eq!(row.algorithm, "sigm");
            assert_eq!(row.merge_dc, merge_meter.count(phases::MERGE));
            assert_eq!(row.l, point.l);
            assert_eq!(row.recall_at_k, point.recall);
            assert_eq!(row.avg_search_dc, point.avg_search_dc);
        }
    }

    #[test]
    fn phases_do_not_bleed() {
        let base = synthetic_mixture(120, 4, 2, 50);
        let meter = DistanceMeter::new();
        let all: Vec<VectorId> = base.ids().collect();
        let build = BuildParams::new(4, 8, 8, 3).unwrap();
        build_index(&base, &all, build, NeighborhoodStrategy::Rng, Metric::default(), &meter)
            .unwrap();
        let queries = synthetic_mixture(5, 4, 2, 51);
        ground_truth(&base, &queries, 3, Metric::default(), &meter).unwrap();
        let snap = meter.snapshot();
        assert!(snap.contains_key(phases::BUILD));
        assert!(snap.contains_key(phases::GROUND_TRUTH));
        assert_eq!(snap.len(), 2);
        assert_eq!(meter.total(), snap.values().sum::<u64>());
    }

    #[test]
    fn synthetic_mixture_is_deterministic() {
        let a = synthetic_mixture(50, 8, 4, 5);
        let b = synthetic_mixture(50, 8, 4, 5);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        assert_eq!(a.dim(), 8);
        let c = synthetic_mixture(50, 8, 4, 6);
        assert_ne!(a, c);
    }

    #[test]
    fn mixture_respects_cluster_count() {
        // one cluster, tiny noise spread relative to a far query: sanity
        // check that points concentrate around a single center
        let d = synthetic_mixture(200, 3, 1, 8);
        let mut mean = [0.0f64; 3];
        for v in d.ids() {
            for (acc, x) in mean.iter_mut().zip(d.vector(v)) {
                *acc += *x as f64;
            }
        }
        for acc in &mut mean {
            *acc /= 200.0;
        }
        let mut var = 0.0;
        for v in d.ids() {
            var += d
                .vector(v)
                .iter()
                .zip(&mean)
                .map(|(x, m)| (*x as f64 - m).powi(2))
                .sum::<f64>();
        }
        var /= 200.0;
        // dim * unit variance, loose band
        assert!(var > 1.0 && var < 9.0, "variance {var}");
    }

    #[test]
    fn report_rows_are_deterministic() {
        let base = synthetic_mixture(260, 5, 3, 60);
        let queries = synthetic_mixture(15, 5, 3, 61);
        let build = BuildParams::new(5, 10, 12, 19).unwrap();
        let job = MergeJob::layered(
            MergeAlgo::Igtm,
            MergeParams {
                m: 5,
                m0: 10,
                local_ef: 12,
                seed: 19,
                ..MergeParams::default()
            },
        );
        let run = || {
            merge_benchmark(
                &base,
                &queries,
                None,
                Metric::default(),
                SplitSpec::new(0.5).unwrap(),
                build,
                NeighborhoodStrategy::Rng,
                std::slice::from_ref(&job),
                3,
                &[8, 16],
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

}
