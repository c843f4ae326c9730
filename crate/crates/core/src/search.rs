//! Single-layer beam search and hierarchical top-down search.
//!
//! The beam loop expands the nearest unexpanded candidate, scores its
//! unseen out-neighbors, and keeps the best `L` candidates, stopping once
//! every surviving candidate has been expanded. A vertex's distance to the
//! query is computed at most once per call; the per-call seen set is the
//! only memoization (cross-call caching would corrupt cost accounting).

use std::collections::{BTreeSet, HashSet};

use crate::error::{Error, Result};
use crate::graph::{HnswIndex, LayerGraph};
use crate::vecstore::{MeteredDistance, Neighbor, VectorId};

/// Search-time knobs: result count `k` and beam width `L` (the expansion
/// factor, usually called `ef`). `L` bounds the candidate pool top-k is
/// drawn from, so `k <= L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchParams {
    k: usize,
    l: usize,
}

impl SearchParams {
    pub fn new(k: usize, l: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        if l < k {
            return Err(Error::invalid(format!("L = {l} must be at least k = {k}")));
        }
        Ok(SearchParams { k, l })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn beam(&self) -> usize {
        self.l
    }
}

/// Bounded candidate pool plus the visited bookkeeping of one beam search.
pub struct CandidateSet {
    cap: usize,
    entries: BTreeSet<Neighbor>,
    seen: HashSet<VectorId>,
    expanded: HashSet<VectorId>,
}

impl CandidateSet {
    pub fn new(cap: usize) -> Self {
        CandidateSet {
            cap,
            entries: BTreeSet::new(),
            seen: HashSet::new(),
            expanded: HashSet::new(),
        }
    }

    /// Whether `v`'s distance has already been computed this call. Once a
    /// vertex is seen it is never re-scored or re-admitted: the pool holds
    /// the best `cap` of everything seen, so anything pruned stays out.
    pub fn is_seen(&self, v: VectorId) -> bool {
        self.seen.contains(&v)
    }

    /// Admits a scored candidate and trims the pool back to capacity.
    pub fn admit(&mut self, n: Neighbor) {
        if !self.seen.insert(n.id) {
            return;
        }
        self.entries.insert(n);
        while self.entries.len() > self.cap {
            let worst = *self.entries.iter().next_back().expect("pool non-empty");
            self.entries.remove(&worst);
        }
    }

    /// Nearest candidate not yet expanded, marking it expanded.
    pub fn take_unexpanded(&mut self) -> Option<Neighbor> {
        let next = self
            .entries
            .iter()
            .find(|n| !self.expanded.contains(&n.id))
            .copied()?;
        self.expanded.insert(next.id);
        Some(next)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Best `k` candidates, ascending by (distance, id).
    pub fn top_k(&self, k: usize) -> Vec<Neighbor> {
        self.entries.iter().take(k).copied().collect()
    }
}

/// Beam search over one layer, seeds scored here (one metered evaluation
/// per distinct seed).
pub fn local_search(
    g: &LayerGraph,
    q: &[f32],
    seeds: &[VectorId],
    params: SearchParams,
    eval: &MeteredDistance,
) -> Result<Vec<Neighbor>> {
    if seeds.is_empty() {
        return Err(Error::invalid("seed set must be non-empty"));
    }
    let mut pool = CandidateSet::new(params.beam());
    for &s in seeds {
        if !g.contains(s) {
            return Err(Error::invalid(format!("seed {s} not in layer")));
        }
        if !pool.is_seen(s) {
            pool.admit(Neighbor::new(s, eval.to_query(q, s)));
        }
    }
    run(g, q, pool, params, eval)
}

/// Beam search over one layer with pre-scored seeds.
///
/// Seed distances must be distances to `q`; they are trusted and not
/// recounted, so callers that already paid for them (hierarchical descent,
/// carried merge pools) charge each evaluation exactly once.
pub fn local_search_seeded(
    g: &LayerGraph,
    q: &[f32],
    seeds: &[Neighbor],
    params: SearchParams,
    eval: &MeteredDistance,
) -> Result<Vec<Neighbor>> {
    if seeds.is_empty() {
        return Err(Error::invalid("seed set must be non-empty"));
    }
    let mut pool = CandidateSet::new(params.beam());
    for s in seeds {
        if !g.contains(s.id) {
            return Err(Error::invalid(format!("seed {} not in layer", s.id)));
        }
        pool.admit(*s);
    }
    run(g, q, pool, params, eval)
}

fn run(
    g: &LayerGraph,
    q: &[f32],
    mut pool: CandidateSet,
    params: SearchParams,
    eval: &MeteredDistance,
) -> Result<Vec<Neighbor>> {
    while let Some(u) = pool.take_unexpanded() {
        for &v in g.neighbors(u.id)? {
            if !pool.is_seen(v) {
                pool.admit(Neighbor::new(v, eval.to_query(q, v)));
            }
        }
    }
    Ok(pool.top_k(params.k()))
}

/// Hierarchical search: greedy descent from the top layer to
/// `target_layer + 1` with `k = 1` (beam `L` throughout), then a full beam
/// search on the target layer.
///
/// `v0` must live in the top layer. The best point of each layer seeds the
/// next with its already-computed distance, so descent charges one
/// evaluation per newly seen vertex.
pub fn hnsw_search(
    h: &HnswIndex,
    q: &[f32],
    v0: VectorId,
    k: usize,
    l: usize,
    target_layer: usize,
    eval: &MeteredDistance,
) -> Result<Vec<Neighbor>> {
    let Some(l_max) = h.max_layer() else {
        return Err(Error::not_found("search on empty index"));
    };
    if target_layer > l_max {
        return Err(Error::invalid(format!(
            "target layer {target_layer} above top layer {l_max}"
        )));
    }
    if !h.layer(l_max).contains(v0) {
        return Err(Error::invalid(format!("start vertex {v0} not in top layer")));
    }
    let descent = SearchParams::new(1, l)?;
    let target = SearchParams::new(k, l)?;
    let mut carried = vec![Neighbor::new(v0, eval.to_query(q, v0))];
    for layer in (target_layer + 1..=l_max).rev() {
        carried = local_search_seeded(h.layer(layer), q, &carried, descent, eval)?;
    }
    local_search_seeded(h.layer(target_layer), q, &carried, target, eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::build::BuildParams;
    use crate::vecstore::{brute_force_knn, Dataset, DistanceMeter, Metric};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n * dim).map(|_| rng.random::<f32>()).collect();
        Dataset::new(dim, data).unwrap()
    }

    fn complete_layer(n: u32) -> LayerGraph {
        let mut g = LayerGraph::new();
        for v in 0..n {
            g.insert_vertex(VectorId(v));
        }
        for v in 0..n {
            let ns: Vec<VectorId> = (0..n).filter(|&u| u != v).map(VectorId).collect();
            g.set_neighborhood(VectorId(v), ns).unwrap();
        }
        g
    }

    #[test]
    fn single_vertex_graph_returns_it() {
        let d = Dataset::new(1, vec![5.0]).unwrap();
        let meter = DistanceMeter::new();
        let eval = MeteredDistance::new(&d, Metric::default(), &meter, "t");
        let mut g = LayerGraph::new();
        g.insert_vertex(VectorId(0));
        let res = local_search(&g, &[100.0], &[VectorId(0)], SearchParams::new(1, 4).unwrap(), &eval)
            .unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].id, VectorId(0));
    }

    #[test]
    fn empty_seeds_are_rejected() {
        let d = Dataset::new(1, vec![0.0]).unwrap();
        let meter = DistanceMeter::new();
        let eval = MeteredDistance::new(&d, Metric::default(), &meter, "t");
        let mut g = LayerGraph::new();
        g.insert_vertex(VectorId(0));
        assert!(local_search(&g, &[0.0], &[], SearchParams::new(1, 4).unwrap(), &eval).is_err());
    }

    #[test]
    fn exhaustive_beam_on_complete_graph_matches_brute_force() {
        let n = 200;
        let d = grid_dataset(n, 4, 11);
        let g = complete_layer(n as u32);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let q: Vec<f32> = (0..4).map(|_| rng.random::<f32>()).collect();
            let meter = DistanceMeter::new();
            let eval = MeteredDistance::new(&d, Metric::default(), &meter, "t");
            let got = local_search(
                &g,
                &q,
                &[VectorId(17)],
                SearchParams::new(5, n).unwrap(),
                &eval,
            )
            .unwrap();
            let want =
                brute_force_knn(&q, &d, 5, Metric::default(), &DistanceMeter::new(), "o").unwrap();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn traversal_cannot_leave_a_component() {
        // component A: {0, 1}, component B: {2, 3}; query sits on vertex 2
        let d = Dataset::new(1, vec![0.0, 1.0, 100.0, 101.0]).unwrap();
        let mut g = LayerGraph::new();
        for v in 0..4 {
            g.insert_vertex(VectorId(v));
        }
        g.set_neighborhood(VectorId(0), vec![VectorId(1)]).unwrap();
        g.set_neighborhood(VectorId(1), vec![VectorId(0)]).unwrap();
        g.set_neighborhood(VectorId(2), vec![VectorId(3)]).unwrap();
        g.set_neighborhood(VectorId(3), vec![VectorId(2)]).unwrap();
        let meter = DistanceMeter::new();
        let eval = MeteredDistance::new(&d, Metric::default(), &meter, "t");
        let res = local_search(
            &g,
            &[100.0],
            &[VectorId(0)],
            SearchParams::new(2, 4).unwrap(),
            &eval,
        )
        .unwrap();
        let got: Vec<u32> = res.iter().map(|n| n.id.0).collect();
        assert_eq!(got, vec![1, 0]);
    }

    #[test]
    fn results_are_sorted_and_bounded_by_reachable() {
        let d = Dataset::new(1, vec![0.0, 1.0, 2.0]).unwrap();
        let mut g = LayerGraph::new();
        for v in 0..3 {
            g.insert_vertex(VectorId(v));
        }
        g.set_neighborhood(VectorId(0), vec![VectorId(1)]).unwrap();
        g.set_neighborhood(VectorId(1), vec![VectorId(0)]).unwrap();
        let meter = DistanceMeter::new();
        let eval = MeteredDistance::new(&d, Metric::default(), &meter, "t");
        // vertex 2 unreachable from 0: only two results for k = 3
        let res = local_search(
            &g,
            &[0.3],
            &[VectorId(0)],
            SearchParams::new(3, 8).unwrap(),
            &eval,
        )
        .unwrap();
        assert_eq!(res.len(), 2);
        assert!(res.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn meter_charges_each_vertex_once() {
        let n = 50;
        let d = grid_dataset(n, 3, 5);
        let g = complete_layer(n as u32);
        let meter = DistanceMeter::new();
        let eval = MeteredDistance::new(&d, Metric::default(), &meter, "t");
        let q = vec![0.5, 0.5, 0.5];
        local_search(&g, &q, &[VectorId(0)], SearchParams::new(3, 10).unwrap(), &eval).unwrap();
        // complete graph: every vertex becomes reachable after the first
        // expansion; each is scored exactly once
        assert_eq!(meter.count("t"), n as u64);
    }

    #[test]
    fn seeded_variant_does_not_recount_seed_distances() {
        let d = Dataset::new(1, vec![0.0, 1.0]).unwrap();
        let mut g = LayerGraph::new();
        g.insert_vertex(VectorId(0));
        g.insert_vertex(VectorId(1));
        g.set_neighborhood(VectorId(0), vec![VectorId(1)]).unwrap();
        g.set_neighborhood(VectorId(1), vec![VectorId(0)]).unwrap();
        let meter = DistanceMeter::new();
        let eval = MeteredDistance::new(&d, Metric::default(), &meter, "t");
        let seeds = [Neighbor::new(VectorId(0), 0.36)];
        let res =
            local_search_seeded(&g, &[0.6], &seeds, SearchParams::new(1, 2).unwrap(), &eval)
                .unwrap();
        assert_eq!(res[0].id, VectorId(1));
        // only vertex 1 was scored; the seed's distance was supplied
        assert_eq!(meter.count("t"), 1);
    }

    #[test]
    fn hnsw_search_on_single_layer_equals_local_search() {
        let n = 120;
        let d = grid_dataset(n, 4, 3);
        let g = complete_layer(n as u32);
        let mut h = HnswIndex::new(BuildParams::default());
        for v in 0..n as u32 {
            h.add_vertex(VectorId(v), 0);
        }
        for v in 0..n as u32 {
            let ns: Vec<VectorId> = (0..n as u32).filter(|&u| u != v).map(VectorId).collect();
            h.layer_mut(0).set_neighborhood(VectorId(v), ns).unwrap();
        }
        h.set_entry(Some(VectorId(0)));

        let q = vec![0.2, 0.9, 0.4, 0.1];
        let meter_a = DistanceMeter::new();
        let eval_a = MeteredDistance::new(&d, Metric::default(), &meter_a, "t");
        let via_hnsw = hnsw_search(&h, &q, VectorId(0), 5, 16, 0, &eval_a).unwrap();

        let meter_b = DistanceMeter::new();
        let eval_b = MeteredDistance::new(&d, Metric::default(), &meter_b, "t");
        let via_local = local_search(
            &g,
            &q,
            &[VectorId(0)],
            SearchParams::new(5, 16).unwrap(),
            &eval_b,
        )
        .unwrap();

        assert_eq!(via_hnsw, via_local);
        assert_eq!(meter_a.count("t"), meter_b.count("t"));
    }

    #[test]
    fn hnsw_search_at_top_layer_is_one_local_search() {
        // three points, two layers; targeting the top layer skips descent
        let d = Dataset::new(1, vec![0.0, 1.0, 2.0]).unwrap();
        let mut h = HnswIndex::new(BuildParams::default());
        h.add_vertex(VectorId(0), 1);
        h.add_vertex(VectorId(1), 1);
        h.add_vertex(VectorId(2), 0);
        h.layer_mut(1).set_neighborhood(VectorId(0), vec![VectorId(1)]).unwrap();
        h.layer_mut(1).set_neighborhood(VectorId(1), vec![VectorId(0)]).unwrap();
        h.set_entry(Some(VectorId(0)));

        let meter = DistanceMeter::new();
        let eval = MeteredDistance::new(&d, Metric::default(), &meter, "t");
        let got = hnsw_search(&h, &[2.0], VectorId(0), 2, 4, 1, &eval).unwrap();
        // only top-layer vertices are reachable; vertex 2 is not consulted
        let ids: Vec<u32> = got.iter().map(|n| n.id.0).collect();
        assert_eq!(ids, vec![1, 0]);
        assert_eq!(meter.count("t"), 2);
    }

    #[test]
    fn hnsw_search_validates_inputs() {
        let d = Dataset::new(1, vec![0.0]).unwrap();
        let meter = DistanceMeter::new();
        let eval = MeteredDistance::new(&d, Metric::default(), &meter, "t");
        let empty = HnswIndex::new(BuildParams::default());
        assert!(matches!(
            hnsw_search(&empty, &[0.0], VectorId(0), 1, 4, 0, &eval),
            Err(Error::NotFound(_))
        ));

        let mut h = HnswIndex::new(BuildParams::default());
        h.add_vertex(VectorId(0), 0);
        h.set_entry(Some(VectorId(0)));
        assert!(matches!(
            hnsw_search(&h, &[0.0], VectorId(0), 1, 4, 3, &eval),
            Err(Error::InvalidArgument(_))
        ));
    }
}
