//! Layer-by-layer merging of two HNSW indices.
//!
//! All three algorithms share the same outer loop: pick a processing vertex
//! `v*`, collect neighbor candidates from both source graphs, build its
//! neighborhood in the merged layer, and carry whatever helps the next
//! iteration. They differ in how the next vertex is picked and how much
//! search work candidate collection costs:
//!
//! * [`ngm_layer`] runs a full hierarchical search into the opposite index
//!   for every vertex, independently.
//! * [`igtm_layer`] walks each source graph from vertex to nearby vertex,
//!   reusing the previous iteration's candidate pool to seed a cheap
//!   single-layer search; it falls back to a random restart (with one
//!   hierarchical search) only when no close unprocessed vertex remains.
//! * [`cgtm_layer`] walks both graphs at once, choosing the next vertex
//!   from either side and carrying candidate pools for both.
//!
//! Carried pool distances are relative to the previous processing vertex,
//! so each carried entry is re-scored against the new one: one metered
//! evaluation per entry per step. The merged layer keeps only the edges
//! assigned here; reverse edges are never added.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::build::{ensure_disjoint, splitmix64, BuildParams};
use crate::error::{Error, Result};
use crate::graph::{HnswIndex, LayerGraph};
use crate::neighborhood::NeighborhoodStrategy;
use crate::search::{hnsw_search, local_search_seeded, SearchParams};
use crate::vecstore::{phases, Dataset, DistanceMeter, Metric, MeteredDistance, Neighbor, VectorId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MergeAlgo {
    Ngm,
    Igtm,
    Cgtm,
}

impl MergeAlgo {
    pub fn name(self) -> &'static str {
        match self {
            MergeAlgo::Ngm => "ngm",
            MergeAlgo::Igtm => "igtm",
            MergeAlgo::Cgtm => "cgtm",
        }
    }
}

impl std::str::FromStr for MergeAlgo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ngm" => Ok(MergeAlgo::Ngm),
            "igtm" => Ok(MergeAlgo::Igtm),
            "cgtm" => Ok(MergeAlgo::Cgtm),
            other => Err(Error::invalid(format!("unknown merge algorithm {other:?}"))),
        }
    }
}

/// Knobs for the layer-merge algorithms.
///
/// `m`/`m0` are the target neighborhood sizes (layer >= 1 / layer 0).
/// `search_ef` is the beam of NGM's per-vertex hierarchical search;
/// `jump_ef` the beam of the restart search in IGTM/CGTM; `local_ef` the
/// beam of their single-layer searches. `next_step_k`/`next_step_ef`
/// bound the search for the next processing vertex, and `m_carry` is how
/// many candidates a pool carries between iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MergeParams {
    pub m: usize,
    pub m0: usize,
    pub search_ef: usize,
    pub jump_ef: usize,
    pub local_ef: usize,
    pub next_step_k: usize,
    pub next_step_ef: usize,
    pub m_carry: usize,
    pub seed: u64,
}

impl MergeParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("m", self.m),
            ("m0", self.m0),
            ("search_ef", self.search_ef),
            ("jump_ef", self.jump_ef),
            ("local_ef", self.local_ef),
            ("next_step_k", self.next_step_k),
            ("next_step_ef", self.next_step_ef),
            ("m_carry", self.m_carry),
        ] {
            if value == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.next_step_ef < self.next_step_k {
            return Err(Error::invalid(format!(
                "next_step_ef = {} must be at least next_step_k = {}",
                self.next_step_ef, self.next_step_k
            )));
        }
        if self.local_ef < self.m {
            return Err(Error::invalid(format!(
                "local_ef = {} must be at least m = {}",
                self.local_ef, self.m
            )));
        }
        Ok(())
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            self.m0
        } else {
            self.m
        }
    }
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams {
            m: 16,
            m0: 32,
            search_ef: 20,
            jump_ef: 20,
            local_ef: 32,
            next_step_k: 8,
            next_step_ef: 16,
            m_carry: 16,
            seed: 0,
        }
    }
}

/// Per-layer bookkeeping: how many random restarts a traversal needed and
/// the order vertices were processed in.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LayerMergeStats {
    pub restarts: u64,
    pub visit_order: Vec<VectorId>,
}

/// Merges every layer of `a` and `b` with the chosen algorithm.
///
/// Layer `i` of the result is the algorithm's merge of both sources'
/// layer `i`; above one source's top layer the other source's layer is
/// copied verbatim (there is nothing to search on the short side, and
/// re-pruning a lone neighborhood could only shrink it). The merged entry
/// point is the lowest id in the top layer. Distances are metered under
/// "merge".
#[allow(clippy::too_many_arguments)]
pub fn general_merge(
    a: &HnswIndex,
    b: &HnswIndex,
    algo: MergeAlgo,
    params: MergeParams,
    strategy: NeighborhoodStrategy,
    dataset: &Dataset,
    metric: Metric,
    meter: &DistanceMeter,
) -> Result<HnswIndex> {
    general_merge_with_stats(a, b, algo, params, strategy, dataset, metric, meter)
        .map(|(index, _)| index)
}

#[allow(clippy::too_many_arguments)]
pub fn general_merge_with_stats(
    a: &HnswIndex,
    b: &HnswIndex,
    algo: MergeAlgo,
    params: MergeParams,
    strategy: NeighborhoodStrategy,
    dataset: &Dataset,
    metric: Metric,
    meter: &DistanceMeter,
) -> Result<(HnswIndex, Vec<LayerMergeStats>)> {
    params.validate()?;
    ensure_disjoint(a, b)?;

    let inherited = if a.is_empty() { b.params() } else { a.params() };
    let merged_params = BuildParams {
        m: params.m,
        m0: params.m0,
        ef_construction: inherited.ef_construction,
        ml: inherited.ml,
        seed: params.seed,
    };

    let top = match (a.max_layer(), b.max_layer()) {
        (Some(la), Some(lb)) => la.max(lb),
        (Some(la), None) => la,
        (None, Some(lb)) => lb,
        (None, None) => return Ok((HnswIndex::new(merged_params), Vec::new())),
    };

    let eval = MeteredDistance::new(dataset, metric, meter, phases::MERGE);
    let mut layers = Vec::with_capacity(top + 1);
    let mut stats = Vec::with_capacity(top + 1);
    for layer in 0..=top {
        let above_a = a.max_layer().is_none_or(|la| layer > la);
        let above_b = b.max_layer().is_none_or(|lb| layer > lb);
        let (graph, layer_stats) = if above_b {
            (a.layer(layer).clone(), LayerMergeStats::default())
        } else if above_a {
            (b.layer(layer).clone(), LayerMergeStats::default())
        } else {
            match algo {
                MergeAlgo::Ngm => ngm_layer(a, b, layer, params, strategy, &eval)?,
                MergeAlgo::Igtm => igtm_layer(a, b, layer, params, strategy, &eval)?,
                MergeAlgo::Cgtm => cgtm_layer(a, b, layer, params, strategy, &eval)?,
            }
        };
        layers.push(graph);
        stats.push(layer_stats);
    }

    let levels: BTreeMap<VectorId, usize> = a.levels().chain(b.levels()).collect();
    let entry = layers[top].vertices().next();
    Ok((
        HnswIndex::from_parts(layers, levels, entry, merged_params),
        stats,
    ))
}

/// Naive merge of one layer: for every vertex of either side, one full
/// hierarchical search into the opposite index, combined with the vertex's
/// own out-neighbors, then neighborhood construction.
pub fn ngm_layer(
    a: &HnswIndex,
    b: &HnswIndex,
    layer: usize,
    params: MergeParams,
    strategy: NeighborhoodStrategy,
    eval: &MeteredDistance,
) -> Result<(LayerGraph, LayerMergeStats)> {
    params.validate()?;
    let mut out = union_layer(a.layer(layer), b.layer(layer));
    let mut stats = LayerMergeStats::default();
    ngm_side(a.layer(layer), b, layer, params, strategy, eval, &mut out, &mut stats)?;
    ngm_side(b.layer(layer), a, layer, params, strategy, eval, &mut out, &mut stats)?;
    Ok((out, stats))
}

#[allow(clippy::too_many_arguments)]
fn ngm_side(
    own: &LayerGraph,
    other: &HnswIndex,
    layer: usize,
    params: MergeParams,
    strategy: NeighborhoodStrategy,
    eval: &MeteredDistance,
    out: &mut LayerGraph,
    stats: &mut LayerMergeStats,
) -> Result<()> {
    if own.is_empty() {
        return Ok(());
    }
    let m_eff = params.cap(layer);
    let entry = other
        .entry()
        .ok_or_else(|| Error::not_found("cannot merge against an empty index"))?;
    for v_star in own.vertices() {
        let q = eval.dataset().vector(v_star);
        let found = hnsw_search(other, q, entry, m_eff, params.search_ef.max(m_eff), layer, eval)?;
        let mut candidates = scored_neighbors(own, v_star, q, eval)?;
        candidates.extend(found);
        let chosen = strategy.construct(v_star, candidates, m_eff, eval);
        out.set_neighborhood(v_star, chosen)?;
        stats.visit_order.push(v_star);
    }
    Ok(())
}

/// Intra-graph traversal merge of one layer: processes all of `a`'s
/// vertices (searching into `b`), then all of `b`'s (searching into `a`).
pub fn igtm_layer(
    a: &HnswIndex,
    b: &HnswIndex,
    layer: usize,
    params: MergeParams,
    strategy: NeighborhoodStrategy,
    eval: &MeteredDistance,
) -> Result<(LayerGraph, LayerMergeStats)> {
    params.validate()?;
    let mut out = union_layer(a.layer(layer), b.layer(layer));
    let mut stats = LayerMergeStats::default();
    let mut rng = layer_rng(params.seed, layer);
    igtm_side(a, b, layer, params, strategy, eval, &mut rng, &mut out, &mut stats)?;
    igtm_side(b, a, layer, params, strategy, eval, &mut rng, &mut out, &mut stats)?;
    Ok((out, stats))
}

#[allow(clippy::too_many_arguments)]
fn igtm_side(
    own_index: &HnswIndex,
    other_index: &HnswIndex,
    layer: usize,
    params: MergeParams,
    strategy: NeighborhoodStrategy,
    eval: &MeteredDistance,
    rng: &mut ChaCha8Rng,
    out: &mut LayerGraph,
    stats: &mut LayerMergeStats,
) -> Result<()> {
    let g_own = own_index.layer(layer);
    let g_other = other_index.layer(layer);
    if g_own.is_empty() {
        return Ok(());
    }
    let m_eff = params.cap(layer);
    let other_entry = other_index
        .entry()
        .ok_or_else(|| Error::not_found("cannot merge against an empty index"))?;
    let local = SearchParams::new(m_eff, params.local_ef.max(m_eff))?;
    let step = SearchParams::new(params.next_step_k, params.next_step_ef.max(params.next_step_k))?;

    let mut not_done = DrawSet::from_sorted(g_own.vertices());
    while let Some(start) = not_done.pick(rng) {
        stats.restarts += 1;
        let mut v_star = start;
        let mut pool = hnsw_search(
            other_index,
            eval.dataset().vector(v_star),
            other_entry,
            params.m_carry,
            params.jump_ef.max(params.m_carry),
            layer,
            eval,
        )?;
        loop {
            not_done.remove(v_star);
            stats.visit_order.push(v_star);
            let q = eval.dataset().vector(v_star);

            let found_other = local_search_seeded(g_other, q, &pool, local, eval)?;
            let mut candidates = scored_neighbors(g_own, v_star, q, eval)?;
            candidates.extend(found_other.iter().copied());
            let chosen = strategy.construct(v_star, candidates, m_eff, eval);
            out.set_neighborhood(v_star, chosen)?;

            let carried: Vec<VectorId> = found_other
                .iter()
                .take(params.m_carry)
                .map(|n| n.id)
                .collect();

            let step_out =
                local_search_seeded(g_own, q, &[Neighbor::new(v_star, 0.0)], step, eval)?;
            let Some(next) = step_out.iter().find(|n| not_done.contains(n.id)) else {
                break;
            };
            v_star = next.id;
            let q_next = eval.dataset().vector(v_star);
            pool = carried
                .into_iter()
                .map(|w| Neighbor::new(w, eval.to_query(q_next, w)))
                .collect();
        }
    }
    Ok(())
}

/// Cross-graph traversal merge of one layer: one traversal over the union
/// vertex set, searching both graphs each iteration and stepping to the
/// nearest unprocessed candidate from either side.
pub fn cgtm_layer(
    a: &HnswIndex,
    b: &HnswIndex,
    layer: usize,
    params: MergeParams,
    strategy: NeighborhoodStrategy,
    eval: &MeteredDistance,
) -> Result<(LayerGraph, LayerMergeStats)> {
    params.validate()?;
    let g_a = a.layer(layer);
    let g_b = b.layer(layer);
    let mut out = union_layer(g_a, g_b);
    let mut stats = LayerMergeStats::default();
    if out.is_empty() {
        return Ok((out, stats));
    }
    let m_eff = params.cap(layer);
    let entry_a = a
        .entry()
        .ok_or_else(|| Error::not_found("cannot merge against an empty index"))?;
    let entry_b = b
        .entry()
        .ok_or_else(|| Error::not_found("cannot merge against an empty index"))?;
    let local = SearchParams::new(m_eff, params.local_ef.max(m_eff))?;
    let restart_l = params.jump_ef.max(params.m_carry);
    let mut rng = layer_rng(params.seed, layer);

    let mut not_done = DrawSet::from_sorted(out.vertices());
    while let Some(start) = not_done.pick(&mut rng) {
        stats.restarts += 1;
        let mut v_star = start;
        let q0 = eval.dataset().vector(v_star);
        let mut pool_a = hnsw_search(a, q0, entry_a, params.m_carry, restart_l, layer, eval)?;
        let mut pool_b = hnsw_search(b, q0, entry_b, params.m_carry, restart_l, layer, eval)?;
        loop {
            not_done.remove(v_star);
            stats.visit_order.push(v_star);
            let q = eval.dataset().vector(v_star);

            let c_a = local_search_seeded(g_a, q, &pool_a, local, eval)?;
            let c_b = local_search_seeded(g_b, q, &pool_b, local, eval)?;

            let (own_graph, cross) = if g_a.contains(v_star) {
                (g_a, &c_b)
            } else {
                (g_b, &c_a)
            };
            let mut candidates = scored_neighbors(own_graph, v_star, q, eval)?;
            candidates.extend(cross.iter().copied());
            let chosen = strategy.construct(v_star, candidates, m_eff, eval);
            out.set_neighborhood(v_star, chosen)?;

            let next = c_a
                .iter()
                .take(params.next_step_k)
                .chain(c_b.iter().take(params.next_step_k))
                .filter(|n| not_done.contains(n.id))
                .min()
                .copied();
            let Some(next) = next else {
                break;
            };
            let q_next = eval.dataset().vector(next.id);
            pool_a = rescore(c_a, next.id, q_next, eval);
            pool_b = rescore(c_b, next.id, q_next, eval);
            v_star = next.id;
        }
    }
    Ok((out, stats))
}

/// Re-scores a carried pool against the next processing vertex. The pool
/// entry equal to that vertex is known to be at distance zero and costs
/// nothing; every other entry costs one metered evaluation.
fn rescore(
    pool: Vec<Neighbor>,
    new_target: VectorId,
    q: &[f32],
    eval: &MeteredDistance,
) -> Vec<Neighbor> {
    pool.into_iter()
        .map(|n| {
            if n.id == new_target {
                Neighbor::new(n.id, 0.0)
            } else {
                Neighbor::new(n.id, eval.to_query(q, n.id))
            }
        })
        .collect()
}

fn union_layer(a: &LayerGraph, b: &LayerGraph) -> LayerGraph {
    let mut out = LayerGraph::new();
    for v in a.vertices().chain(b.vertices()) {
        out.insert_vertex(v);
    }
    out
}

fn scored_neighbors(
    g: &LayerGraph,
    v: VectorId,
    q: &[f32],
    eval: &MeteredDistance,
) -> Result<Vec<Neighbor>> {
    Ok(g.neighbors(v)?
        .iter()
        .map(|&w| Neighbor::new(w, eval.to_query(q, w)))
        .collect())
}

fn layer_rng(seed: u64, layer: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ ((layer as u64 + 1) << 17)))
}

/// Set with O(1) removal and seeded random picks; iteration effects are
/// deterministic for a fixed seed and op sequence.
struct DrawSet {
    items: Vec<VectorId>,
    positions: HashMap<VectorId, usize>,
}

impl DrawSet {
    fn from_sorted(items: impl Iterator<Item = VectorId>) -> Self {
        let items: Vec<VectorId> = items.collect();
        let positions = items.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        DrawSet { items, positions }
    }

    fn pick(&self, rng: &mut ChaCha8Rng) -> Option<VectorId> {
        if self.items.is_empty() {
            return None;
        }
        Some(self.items[rng.random_range(0..self.items.len())])
    }

    fn contains(&self, v: VectorId) -> bool {
        self.positions.contains_key(&v)
    }

    fn remove(&mut self, v: VectorId) -> bool {
        let Some(pos) = self.positions.remove(&v) else {
            return false;
        };
        self.items.swap_remove(pos);
        if let Some(&moved) = self.items.get(pos) {
            self.positions.insert(moved, pos);
        }
        true
    }
}
