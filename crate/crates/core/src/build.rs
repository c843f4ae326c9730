//! HNSW construction by sequential insertion, plus the insertion-based
//! merge baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::HnswIndex;
use crate::neighborhood::NeighborhoodStrategy;
use crate::search::{local_search_seeded, SearchParams};
use crate::vecstore::{phases, Dataset, DistanceMeter, Metric, MeteredDistance, Neighbor, VectorId};

/// Construction parameters: degree caps `m` (upper layers) and `m0`
/// (layer 0), beam width for candidate collection, level-generation scale,
/// and the seed all randomness flows from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildParams {
    pub m: usize,
    pub m0: usize,
    pub ef_construction: usize,
    pub ml: f64,
    pub seed: u64,
}

impl BuildParams {
    /// `ml` defaults to `1 / ln(m)`, the standard level-generation scale.
    pub fn new(m: usize, m0: usize, ef_construction: usize, seed: u64) -> Result<Self> {
        if m == 0 || ef_construction == 0 {
            return Err(Error::invalid("M and ef_construction must be positive"));
        }
        if m0 < m {
            return Err(Error::invalid(format!("M0 = {m0} must be at least M = {m}")));
        }
        Ok(BuildParams {
            m,
            m0,
            ef_construction,
            ml: 1.0 / (m.max(2) as f64).ln(),
            seed,
        })
    }

    pub fn with_ml(mut self, ml: f64) -> Result<Self> {
        if !ml.is_finite() || ml <= 0.0 {
            return Err(Error::invalid("mL must be positive"));
        }
        self.ml = ml;
        Ok(self)
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            self.m0
        } else {
            self.m
        }
    }
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams::new(16, 32, 32, 0).expect("default params valid")
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Geometric level rule applied to one uniform draw `u` from `(0, 1]`.
pub fn level_for_uniform(u: f64, ml: f64) -> usize {
    debug_assert!(u > 0.0 && u <= 1.0);
    (-u.ln() * ml).floor() as usize
}

/// Draws a level: `floor(-ln(U) * ml)` with `U` uniform in `(0, 1]`.
pub fn assign_level<R: Rng + ?Sized>(rng: &mut R, ml: f64) -> usize {
    let u = 1.0 - rng.random::<f64>(); // (0, 1]
    level_for_uniform(u, ml)
}

fn level_rng(params: BuildParams, v: VectorId) -> ChaCha8Rng {
    // per-vertex stream: a vertex's level depends only on (seed, id), so
    // insertion order cannot perturb levels
    ChaCha8Rng::seed_from_u64(splitmix64(params.seed ^ ((v.0 as u64) << 1 | 1)))
}

/// Inserts `v` with a level drawn from the index seed and `v`'s id.
pub fn insert(
    h: &mut HnswIndex,
    v: VectorId,
    params: BuildParams,
    strategy: NeighborhoodStrategy,
    eval: &MeteredDistance,
) -> Result<()> {
    let level = assign_level(&mut level_rng(params, v), params.ml);
    insert_at_level(h, v, level, params, strategy, eval)
}

/// Inserts `v` at a fixed `level`: greedy descent from the entry point to
/// `level + 1`, then per-layer candidate search, neighborhood selection,
/// and reverse links with re-pruning when a neighbor overflows its cap.
pub fn insert_at_level(
    h: &mut HnswIndex,
    v: VectorId,
    level: usize,
    params: BuildParams,
    strategy: NeighborhoodStrategy,
    eval: &MeteredDistance,
) -> Result<()> {
    if h.contains(v) {
        return Err(Error::invalid(format!("vertex {v} already in index")));
    }
    if v.index() >= eval.dataset().len() {
        return Err(Error::invalid(format!(
            "vertex {v} out of range (dataset has {} vectors)",
            eval.dataset().len()
        )));
    }

    let Some(l_max) = h.max_layer() else {
        h.add_vertex(v, level);
        h.set_entry(Some(v));
        return Ok(());
    };
    let entry = h.entry().expect("non-empty index has an entry point");
    let q = eval.dataset().vector(v);

    let beam = params.ef_construction;
    let descent = SearchParams::new(1, beam)?;
    let collect = SearchParams::new(beam, beam)?;

    let mut carried = vec![Neighbor::new(entry, eval.to_query(q, entry))];
    for layer in (level + 1..=l_max).rev() {
        carried = local_search_seeded(h.layer(layer), q, &carried, descent, eval)?;
    }

    h.add_vertex(v, level);

    for layer in (0..=level.min(l_max)).rev() {
        let found = local_search_seeded(h.layer(layer), q, &carried, collect, eval)?;
        let cap = params.cap(layer);
        let chosen = strategy.construct(v, found.clone(), cap, eval);
        h.layer_mut(layer).set_neighborhood(v, chosen.clone())?;

        for &u in &chosen {
            let mut list = h.layer(layer).neighbors(u)?.to_vec();
            list.push(v);
            if list.len() > cap {
                // d(u, v) equals the forward distance already paid for;
                // the neighbor's other list entries are rescored
                let d_uv = found
                    .iter()
                    .find(|n| n.id == u)
                    .expect("chosen came from found")
                    .dist;
                let u_vec = eval.dataset().vector(u);
                let rescored: Vec<Neighbor> = list
                    .iter()
                    .map(|&w| {
                        if w == v {
                            Neighbor::new(w, d_uv)
                        } else {
                            Neighbor::new(w, eval.to_query(u_vec, w))
                        }
                    })
                    .collect();
                let pruned = strategy.construct(u, rescored, cap, eval);
                h.layer_mut(layer).set_neighborhood(u, pruned)?;
            } else {
                h.layer_mut(layer).set_neighborhood(u, list)?;
            }
        }
        carried = found;
    }

    if level > l_max {
        h.set_entry(Some(v));
    }
    Ok(())
}

/// Builds an index by inserting `ids` in the given order. Deterministic for
/// a fixed (dataset, id order, seed); distances are metered under "build".
pub fn build_index(
    dataset: &Dataset,
    ids: &[VectorId],
    params: BuildParams,
    strategy: NeighborhoodStrategy,
    metric: Metric,
    meter: &DistanceMeter,
) -> Result<HnswIndex> {
    if ids.is_empty() {
        return Err(Error::invalid("id list must be non-empty"));
    }
    let mut unique = std::collections::HashSet::with_capacity(ids.len());
    for &v in ids {
        if !unique.insert(v) {
            return Err(Error::invalid(format!("duplicate id {v} in build list")));
        }
    }
    let eval = MeteredDistance::new(dataset, metric, meter, phases::BUILD);
    let mut h = HnswIndex::new(params);
    for &v in ids {
        insert(&mut h, v, params, strategy, &eval)?;
    }
    Ok(h)
}

/// Insertion-based merge baseline: clones the larger index (ties favor the
/// first argument) and re-inserts every vertex of the smaller one in
/// ascending id order, keeping each vertex's original level so merged layer
/// populations stay comparable across merge algorithms. Distances are
/// metered under "merge".
pub fn sigm_merge(
    a: &HnswIndex,
    b: &HnswIndex,
    dataset: &Dataset,
    metric: Metric,
    params: BuildParams,
    strategy: NeighborhoodStrategy,
    meter: &DistanceMeter,
) -> Result<HnswIndex> {
    ensure_disjoint(a, b)?;
    let (big, small) = if b.vertex_count() > a.vertex_count() {
        (b, a)
    } else {
        (a, b)
    };
    let mut merged = big.clone();
    merged.set_params(params);
    let eval = MeteredDistance::new(dataset, metric, meter, phases::MERGE);
    for (v, level) in small.levels() {
        insert_at_level(&mut merged, v, level, params, strategy, &eval)?;
    }
    Ok(merged)
}

pub(crate) fn ensure_disjoint(a: &HnswIndex, b: &HnswIndex) -> Result<()> {
    let (probe, other) = if a.vertex_count() <= b.vertex_count() {
        (a, b)
    } else {
        (b, a)
    };
    for (v, _) in probe.levels() {
        if other.contains(v) {
            return Err(Error::invalid(format!(
                "vertex {v} present in both indices; id sets must be disjoint"
            )));
        }
    }
    Ok(())
}
