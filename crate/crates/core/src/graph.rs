//! Layered directed graph storage for HNSW indices.
//!
//! Edges are stored as out-adjacency lists only. Merge construction assigns
//! whole out-neighborhoods per vertex and never touches reverse edges;
//! insertion adds reverse links explicitly. Adjacency order is whatever
//! neighborhood construction produced (ascending distance from the owner)
//! and is never re-sorted on read.

use std::collections::{BTreeMap, HashSet};

use crate::build::BuildParams;
use crate::error::{Error, Result};
use crate::vecstore::VectorId;

static EMPTY_LAYER: LayerGraph = LayerGraph { adjacency: BTreeMap::new() };

/// One HNSW layer: a vertex set with directed out-neighbor lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerGraph {
    adjacency: BTreeMap<VectorId, Vec<VectorId>>,
}

impl LayerGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `v` with an empty out-list; no-op if already present.
    pub fn insert_vertex(&mut self, v: VectorId) {
        self.adjacency.entry(v).or_default();
    }

    pub fn contains(&self, v: VectorId) -> bool {
        self.adjacency.contains_key(&v)
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Vertices in ascending id order.
    pub fn vertices(&self) -> impl Iterator<Item = VectorId> + '_ {
        self.adjacency.keys().copied()
    }

    /// Out-neighbors of `v`, order-stable across calls.
    pub fn neighbors(&self, v: VectorId) -> Result<&[VectorId]> {
        self.adjacency
            .get(&v)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::not_found(format!("vertex {v} not in layer")))
    }

    /// Replaces `v`'s out-list with `ns`.
    ///
    /// All of `ns` must be members of this layer, must not contain `v`, and
    /// must not contain duplicates.
    pub fn set_neighborhood(&mut self, v: VectorId, ns: Vec<VectorId>) -> Result<()> {
        if !self.contains(v) {
            return Err(Error::invalid(format!("vertex {v} not in layer")));
        }
        let mut seen = HashSet::with_capacity(ns.len());
        for &u in &ns {
            if u == v {
                return Err(Error::invalid(format!("self-loop on vertex {v}")));
            }
            if !self.contains(u) {
                return Err(Error::invalid(format!(
                    "neighbor {u} of vertex {v} not in layer"
                )));
            }
            if !seen.insert(u) {
                return Err(Error::invalid(format!(
                    "duplicate neighbor {u} for vertex {v}"
                )));
            }
        }
        self.adjacency.insert(v, ns);
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(Vec::len).sum()
    }
}

/// Stack of layers with per-vertex levels, an entry point, and the build
/// parameters the index was constructed with.
///
/// Invariants maintained by build and merge: vertex membership is nested
/// (layer 0 holds every vertex), and the entry vertex lives in the top
/// layer. An index with no vertices has no layers ("l_max = -1"); reads on
/// it return empty results rather than erroring.
#[derive(Clone, Debug, PartialEq)]
pub struct HnswIndex {
    layers: Vec<LayerGraph>,
    levels: BTreeMap<VectorId, usize>,
    entry: Option<VectorId>,
    params: BuildParams,
}

impl HnswIndex {
    pub fn new(params: BuildParams) -> Self {
        HnswIndex {
            layers: Vec::new(),
            levels: BTreeMap::new(),
            entry: None,
            params,
        }
    }

    pub(crate) fn from_parts(
        layers: Vec<LayerGraph>,
        levels: BTreeMap<VectorId, usize>,
        entry: Option<VectorId>,
        params: BuildParams,
    ) -> Self {
        HnswIndex {
            layers,
            levels,
            entry,
            params,
        }
    }

    /// Builds an index from explicit layers. Membership must be nested
    /// (every vertex of layer `i + 1` also in layer `i`) and `entry` must
    /// live in the top layer; levels are derived from membership.
    pub fn from_layers(
        layers: Vec<LayerGraph>,
        entry: Option<VectorId>,
        params: BuildParams,
    ) -> Result<Self> {
        let mut levels = BTreeMap::new();
        for (l, layer) in layers.iter().enumerate() {
            for v in layer.vertices() {
                if l > 0 && !layers[l - 1].contains(v) {
                    return Err(Error::invalid(format!(
                        "vertex {v} in layer {l} is missing from layer {}",
                        l - 1
                    )));
                }
                levels.insert(v, l);
            }
        }
        match (entry, layers.last()) {
            (Some(e), Some(top)) if !top.contains(e) => {
                return Err(Error::invalid(format!("entry {e} not in top layer")));
            }
            (Some(e), None) => {
                return Err(Error::invalid(format!("entry {e} on a layerless index")));
            }
            _ => {}
        }
        if entry.is_none() && layers.iter().any(|l| !l.is_empty()) {
            return Err(Error::invalid("non-empty index needs an entry point"));
        }
        Ok(HnswIndex {
            layers,
            levels,
            entry,
            params,
        })
    }

    pub fn params(&self) -> BuildParams {
        self.params
    }

    pub(crate) fn set_params(&mut self, params: BuildParams) {
        self.params = params;
    }

    /// Highest layer index, or `None` for an empty index.
    pub fn max_layer(&self) -> Option<usize> {
        self.layers.len().checked_sub(1)
    }

    /// The layer at `l`. Indices above the top resolve to an empty layer,
    /// so merging against a shorter index degrades gracefully.
    pub fn layer(&self, l: usize) -> &LayerGraph {
        self.layers.get(l).unwrap_or(&EMPTY_LAYER)
    }

    pub(crate) fn layer_mut(&mut self, l: usize) -> &mut LayerGraph {
        &mut self.layers[l]
    }

    pub fn entry(&self) -> Option<VectorId> {
        self.entry
    }

    pub(crate) fn set_entry(&mut self, entry: Option<VectorId>) {
        self.entry = entry;
    }

    pub fn contains(&self, v: VectorId) -> bool {
        self.levels.contains_key(&v)
    }

    /// The highest layer containing `v`.
    pub fn level_of(&self, v: VectorId) -> Option<usize> {
        self.levels.get(&v).copied()
    }

    /// `(vertex, level)` pairs in ascending id order.
    pub fn levels(&self) -> impl Iterator<Item = (VectorId, usize)> + '_ {
        self.levels.iter().map(|(&v, &l)| (v, l))
    }

    pub fn vertex_count(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Inserts `v` into layers `0..=level`, growing the stack as needed.
    /// Does not touch the entry point; callers decide that.
    pub(crate) fn add_vertex(&mut self, v: VectorId, level: usize) {
        debug_assert!(!self.contains(v), "vertex {v} already in index");
        while self.layers.len() <= level {
            self.layers.push(LayerGraph::new());
        }
        for l in 0..=level {
            self.layers[l].insert_vertex(v);
        }
        self.levels.insert(v, level);
    }

    pub fn stats(&self) -> IndexStats {
        let mut layer_vertex_counts = Vec::with_capacity(self.layers.len());
        let mut degree_histograms = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            layer_vertex_counts.push(layer.vertex_count());
            let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
            for v in layer.vertices() {
                let deg = layer.neighbors(v).expect("vertex just listed").len();
                *hist.entry(deg).or_insert(0) += 1;
            }
            degree_histograms.push(hist);
        }
        IndexStats {
            layer_vertex_counts,
            degree_histograms,
            max_layer: self.max_layer(),
        }
    }
}

/// Read-only summary of an index for reports.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexStats {
    pub layer_vertex_counts: Vec<usize>,
    pub degree_histograms: Vec<BTreeMap<usize, usize>>,
    pub max_layer: Option<usize>,
}
