//! Neighborhood construction strategies, shared by build and merge.
//!
//! Candidates arrive scored against the target vertex. The k-NN strategy
//! keeps the nearest ones; the RNG strategy walks candidates in ascending
//! distance order and admits `v` only while ρ(v*, v) < ρ(v, w) for every
//! already-admitted `w`, which spreads edges across directions instead of
//! clustering them. No relaxation factor is applied to the pruning rule.

use std::collections::HashSet;

use crate::vecstore::{MeteredDistance, Neighbor, VectorId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeighborhoodStrategy {
    Knn,
    Rng,
}

impl NeighborhoodStrategy {
    /// Selects at most `limit` neighbors for `v_star` from `candidates`.
    pub fn construct(
        self,
        v_star: VectorId,
        candidates: Vec<Neighbor>,
        limit: usize,
        eval: &MeteredDistance,
    ) -> Vec<VectorId> {
        match self {
            NeighborhoodStrategy::Knn => knn_construct(v_star, candidates, limit),
            NeighborhoodStrategy::Rng => rng_construct(v_star, candidates, limit, eval),
        }
    }
}

impl std::str::FromStr for NeighborhoodStrategy {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "knn" => Ok(NeighborhoodStrategy::Knn),
            "rng" => Ok(NeighborhoodStrategy::Rng),
            other => Err(crate::error::Error::invalid(format!(
                "unknown neighborhood strategy {other:?}"
            ))),
        }
    }
}

/// The `k` nearest candidates, ascending by (distance, id).
pub fn knn_construct(v_star: VectorId, mut candidates: Vec<Neighbor>, k: usize) -> Vec<VectorId> {
    candidates.sort();
    let mut out = Vec::with_capacity(k.min(candidates.len()));
    let mut taken = HashSet::with_capacity(k);
    for cand in candidates {
        if out.len() >= k {
            break;
        }
        if cand.id == v_star || !taken.insert(cand.id) {
            continue;
        }
        out.push(cand.id);
    }
    out
}

/// Relative-neighborhood pruning, at most `m` admissions.
///
/// Candidate distances are distances to `v_star`; the pairwise ρ(v, w)
/// checks against already-admitted vertices are metered. The admitted list
/// comes back in admission order, which equals ascending distance order.
pub fn rng_construct(
    v_star: VectorId,
    mut candidates: Vec<Neighbor>,
    m: usize,
    eval: &MeteredDistance,
) -> Vec<VectorId> {
    candidates.sort();
    let mut admitted: Vec<VectorId> = Vec::with_capacity(m.min(candidates.len()));
    let mut considered = HashSet::with_capacity(candidates.len());
    for cand in candidates {
        if admitted.len() >= m {
            break;
        }
        if cand.id == v_star || !considered.insert(cand.id) {
            continue;
        }
        let keeps = admitted
            .iter()
            .all(|&w| cand.dist < eval.between(cand.id, w));
        if keeps {
            admitted.push(cand.id);
        }
    }
    admitted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecstore::{Dataset, DistanceMeter, Metric};

    fn eval_for<'a>(d: &'a Dataset, meter: &DistanceMeter) -> MeteredDistance<'a> {
        MeteredDistance::new(d, Metric::default(), meter, "t")
    }

    fn scored(d: &Dataset, v_star: VectorId, ids: &[u32]) -> Vec<Neighbor> {
        let meter = DistanceMeter::new();
        let eval = eval_for(d, &meter);
        ids.iter()
            .map(|&id| Neighbor::new(VectorId(id), eval.between(v_star, VectorId(id))))
            .collect()
    }

    #[test]
    fn knn_keeps_all_when_short() {
        let d = Dataset::new(1, vec![0.0, 5.0, 1.0]).unwrap();
        let cands = scored(&d, VectorId(0), &[1, 2]);
        let got = knn_construct(VectorId(0), cands, 10);
        assert_eq!(got, vec![VectorId(2), VectorId(1)]);
    }

    #[test]
    fn knn_hand_sorted_case() {
        // v* = 0, candidates at 5, 1, 3 on a line, k = 2 -> nearest two are 1, 3
        let d = Dataset::new(1, vec![0.0, 5.0, 1.0, 3.0]).unwrap();
        let cands = scored(&d, VectorId(0), &[1, 2, 3]);
        let got = knn_construct(VectorId(0), cands, 2);
        assert_eq!(got, vec![VectorId(2), VectorId(3)]);
    }

    #[test]
    fn knn_breaks_distance_ties_by_lower_id() {
        let d = Dataset::new(1, vec![0.0, 1.0, -1.0]).unwrap();
        let cands = scored(&d, VectorId(0), &[2, 1]);
        let got = knn_construct(VectorId(0), cands, 1);
        assert_eq!(got, vec![VectorId(1)]);
    }

    #[test]
    fn rng_single_candidate_always_admitted() {
        let d = Dataset::new(1, vec![0.0, 42.0]).unwrap();
        let meter = DistanceMeter::new();
        let eval = eval_for(&d, &meter);
        let cands = scored(&d, VectorId(0), &[1]);
        assert_eq!(rng_construct(VectorId(0), cands, 3, &eval), vec![VectorId(1)]);
        assert_eq!(meter.count("t"), 0); // empty inner loop, no pairwise checks
    }

    #[test]
    fn rng_prunes_shadowed_line_points() {
        // v* = 0, candidates {1, 2, 5}: 2 is closer to 1 than to v*, and 5 is
        // closer to 1 than to v*, so only 1 survives.
        let d = Dataset::new(1, vec![0.0, 1.0, 2.0, 5.0]).unwrap();
        let meter = DistanceMeter::new();
        let eval = eval_for(&d, &meter);
        let cands = scored(&d, VectorId(0), &[1, 2, 3]);
        assert_eq!(rng_construct(VectorId(0), cands, 3, &eval), vec![VectorId(1)]);
    }

    #[test]
    fn rng_keeps_orthogonal_pair() {
        // v* at origin, candidates at (1,0) and (0,1): each is closer to v*
        // than to the other, so both are admitted.
        let d = Dataset::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let meter = DistanceMeter::new();
        let eval = eval_for(&d, &meter);
        let cands = scored(&d, VectorId(0), &[1, 2]);
        assert_eq!(
            rng_construct(VectorId(0), cands, 2, &eval),
            vec![VectorId(1), VectorId(2)]
        );
    }

    #[test]
    fn rng_respects_size_limit() {
        let d = Dataset::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]).unwrap();
        let meter = DistanceMeter::new();
        let eval = eval_for(&d, &meter);
        let cands = scored(&d, VectorId(0), &[1, 2, 3, 4]);
        let got = rng_construct(VectorId(0), cands, 2, &eval);
        assert_eq!(got.len(), 2);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_points() -> impl Strategy<Value = Vec<(f32, f32)>> {
            prop::collection::vec((-50.0f32..50.0, -50.0f32..50.0), 2..24)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn rng_output_is_subset_and_first_is_nearest(points in arb_points(), m in 1usize..8) {
                let rows: Vec<Vec<f32>> = points.iter().map(|&(x, y)| vec![x, y]).collect();
                let d = Dataset::from_rows(&rows).unwrap();
                let v_star = VectorId(0);
                let meter = DistanceMeter::new();
                let eval = MeteredDistance::new(&d, Metric::default(), &meter, "t");
                let cands: Vec<Neighbor> = (1..rows.len() as u32)
                    .map(|id| Neighbor::new(VectorId(id), eval.between(v_star, VectorId(id))))
                    .collect();
                let nearest = cands.iter().min().copied().unwrap();
                let cand_ids: std::collections::HashSet<VectorId> =
                    cands.iter().map(|c| c.id).collect();

                let got = rng_construct(v_star, cands.clone(), m, &eval);

                prop_assert!(got.len() <= m);
                prop_assert!(got.iter().all(|id| cand_ids.contains(id)));
                prop_assert!(!got.contains(&v_star));
                let mut dedup = got.clone();
                dedup.sort();
                dedup.dedup();
                prop_assert_eq!(dedup.len(), got.len());
                // the nearest candidate has no admitted predecessor, so it is
                // always the first admission
                prop_assert_eq!(got[0], nearest.id);

                // shuffling the candidate order cannot change the result
                let mut reversed = cands;
                reversed.reverse();
                let again = rng_construct(v_star, reversed, m, &eval);
                prop_assert_eq!(got, again);
            }

            #[test]
            fn knn_matches_plain_sort(points in arb_points(), k in 1usize..8) {
                let rows: Vec<Vec<f32>> = points.iter().map(|&(x, y)| vec![x, y]).collect();
                let d = Dataset::from_rows(&rows).unwrap();
                let v_star = VectorId(0);
                let meter = DistanceMeter::new();
                let eval = MeteredDistance::new(&d, Metric::default(), &meter, "t");
                let cands: Vec<Neighbor> = (1..rows.len() as u32)
                    .map(|id| Neighbor::new(VectorId(id), eval.between(v_star, VectorId(id))))
                    .collect();

                let got = knn_construct(v_star, cands.clone(), k);

                let mut sorted = cands;
                sorted.sort();
                let want: Vec<VectorId> = sorted.iter().take(k).map(|c| c.id).collect();
                prop_assert_eq!(got, want);
            }
        }
    }
}
