//! Vector storage, metrics, and metered distance evaluation.
//!
//! Every metric evaluation performed by this crate — during search, build,
//! merge, or ground-truth computation — goes through [`MeteredDistance`],
//! which charges exactly one increment to a named phase counter per
//! evaluation. There is no unmetered distance path, so phase totals are an
//! implementation-independent cost measure.

use std::collections::BTreeMap;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

/// Conventional phase labels used by the higher-level operations.
pub mod phases {
    pub const BUILD: &str = "build";
    pub const MERGE: &str = "merge";
    pub const SEARCH: &str = "search";
    pub const GROUND_TRUTH: &str = "ground_truth";
}

/// Identifier of a vector within a [`Dataset`]. Ids are dense in `[0, n)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct VectorId(pub u32);

impl VectorId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for VectorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A vector id scored by its distance to some query point.
///
/// Ordering is by distance, ties broken by smaller id, which makes every
/// sort and arg-min in the crate deterministic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: VectorId,
    pub dist: f64,
}

impl Neighbor {
    pub fn new(id: VectorId, dist: f64) -> Self {
        Neighbor { id, dist }
    }
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Owned, immutable matrix of `n` vectors with `dim` components each.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f32>,
}

impl Dataset {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(Error::invalid("dataset with dim 0 cannot hold components"));
        }
        if dim > 0 && !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "component count {} is not a multiple of dim {}",
                data.len(),
                dim
            )));
        }
        Ok(Dataset { dim, data })
    }

    pub fn empty() -> Self {
        Dataset { dim: 0, data: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Ok(Self::empty());
        };
        let dim = first.len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::invalid(format!(
                    "row {} has {} components, expected {}",
                    i,
                    row.len(),
                    dim
                )));
            }
            data.extend_from_slice(row);
        }
        Dataset::new(dim, data)
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The vector stored under `id`. Panics if `id` is out of range; use
    /// [`Dataset::get`] on unvalidated ids.
    #[inline]
    pub fn vector(&self, id: VectorId) -> &[f32] {
        let start = id.index() * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn get(&self, id: VectorId) -> Option<&[f32]> {
        if id.index() < self.len() {
            Some(self.vector(id))
        } else {
            None
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = VectorId> {
        (0..self.len() as u32).map(VectorId)
    }

    /// Splits into the first `cut` rows and the rest.
    pub fn split_rows(&self, cut: usize) -> Result<(Dataset, Dataset)> {
        if cut > self.len() {
            return Err(Error::invalid(format!(
                "cannot split {} rows at {cut}",
                self.len()
            )));
        }
        let at = cut * self.dim;
        Ok((
            Dataset {
                dim: self.dim,
                data: self.data[..at].to_vec(),
            },
            Dataset {
                dim: self.dim,
                data: self.data[at..].to_vec(),
            },
        ))
    }

    pub(crate) fn components(&self) -> &[f32] {
        &self.data
    }
}

/// Distance function over dataset vectors.
///
/// Squared euclidean is the default: it is monotone with euclidean, so every
/// nearest-neighbor ranking and pruning comparison in this crate is
/// unchanged, and it avoids a square root per evaluation.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum Metric {
    #[default]
    SquaredEuclidean,
    Euclidean,
}

impl Metric {
    /// Distances are accumulated in f64 from f32 components, which matches
    /// fvecs source precision while avoiding accumulation error in the sum.
    #[inline]
    fn eval(self, a: &[f32], b: &[f32]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = 0.0f64;
        for (x, y) in a.iter().zip(b.iter()) {
            let d = *x as f64 - *y as f64;
            acc += d * d;
        }
        match self {
            Metric::SquaredEuclidean => acc,
            Metric::Euclidean => acc.sqrt(),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Metric::SquaredEuclidean => 0,
            Metric::Euclidean => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Metric::SquaredEuclidean),
            1 => Ok(Metric::Euclidean),
            other => Err(Error::invalid(format!("unknown metric code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::SquaredEuclidean => "squared-euclidean",
            Metric::Euclidean => "euclidean",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared-euclidean" | "sqeuclidean" | "l2sq" => Ok(Metric::SquaredEuclidean),
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

/// Scoped counter of distance-function evaluations, keyed by phase label.
///
/// Counters are monotone. Concurrent increments are safe; parallel callers
/// may also keep per-context meters and fold them in with
/// [`DistanceMeter::merge_from`] at join points.
#[derive(Debug, Default)]
pub struct DistanceMeter {
    phases: Mutex<BTreeMap<String, Arc<AtomicU64>>>,
}

impl DistanceMeter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Handle that charges increments to `name`. The handle is cheap to
    /// clone and bump, so hot loops pay one atomic add per evaluation.
    pub fn phase(&self, name: &str) -> PhaseCounter {
        let mut phases = self.phases.lock().unwrap();
        let counter = phases
            .entry(name.to_string())
            .or_insert_with(|| Arc::new(AtomicU64::new(0)));
        PhaseCounter(Arc::clone(counter))
    }

    /// Point-in-time copy of all phase counts; later increments do not
    /// mutate the returned map.
    pub fn snapshot(&self) -> BTreeMap<String, u64> {
        let phases = self.phases.lock().unwrap();
        phases
            .iter()
            .map(|(name, counter)| (name.clone(), counter.load(Ordering::Relaxed)))
            .collect()
    }

    pub fn count(&self, phase: &str) -> u64 {
        let phases = self.phases.lock().unwrap();
        phases
            .get(phase)
            .map(|c| c.load(Ordering::Relaxed))
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.snapshot().values().sum()
    }

    /// Folds another meter's counts into this one (join point for
    /// per-context sub-counters).
    pub fn merge_from(&self, other: &DistanceMeter) {
        for (name, count) in other.snapshot() {
            self.phase(&name).0.fetch_add(count, Ordering::Relaxed);
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhaseCounter(Arc<AtomicU64>);

impl PhaseCounter {
    #[inline]
    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Distance evaluator bound to a dataset, a metric, and one meter phase.
///
/// All search, build, and merge code computes distances exclusively through
/// one of these, so the owning phase accounts for every evaluation.
pub struct MeteredDistance<'a> {
    dataset: &'a Dataset,
    metric: Metric,
    counter: PhaseCounter,
}

impl<'a> MeteredDistance<'a> {
    pub fn new(dataset: &'a Dataset, metric: Metric, meter: &DistanceMeter, phase: &str) -> Self {
        MeteredDistance {
            dataset,
            metric,
            counter: meter.phase(phase),
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// ρ between two stored vectors. Panics on out-of-range ids; callers
    /// pass ids validated by graph membership.
    #[inline]
    pub fn between(&self, a: VectorId, b: VectorId) -> f64 {
        self.counter.bump();
        self.metric.eval(self.dataset.vector(a), self.dataset.vector(b))
    }

    /// ρ between a raw query vector and a stored vector.
    #[inline]
    pub fn to_query(&self, q: &[f32], v: VectorId) -> f64 {
        assert_eq!(q.len(), self.dataset.dim(), "query dim mismatch");
        self.counter.bump();
        self.metric.eval(q, self.dataset.vector(v))
    }

    /// Scores `ids` against `q`, one metered evaluation each.
    pub fn score_all(&self, q: &[f32], ids: impl IntoIterator<Item = VectorId>) -> Vec<Neighbor> {
        ids.into_iter()
            .map(|id| Neighbor::new(id, self.to_query(q, id)))
            .collect()
    }
}

/// Metered distance between two stored vectors.
pub fn distance(
    meter: &DistanceMeter,
    phase: &str,
    a: VectorId,
    b: VectorId,
    dataset: &Dataset,
    metric: Metric,
) -> Result<f64> {
    for id in [a, b] {
        if id.index() >= dataset.len() {
            return Err(Error::invalid(format!(
                "vector id {} out of range (dataset has {} vectors)",
                id,
                dataset.len()
            )));
        }
    }
    Ok(MeteredDistance::new(dataset, metric, meter, phase).between(a, b))
}

/// Exact k-nearest-neighbor scan over the whole dataset.
///
/// Returns the `k` ids with smallest ρ(q, ·), ascending by distance, ties by
/// smaller id. Uses a bounded max-heap, O(n log k).
pub fn brute_force_knn(
    q: &[f32],
    dataset: &Dataset,
    k: usize,
    metric: Metric,
    meter: &DistanceMeter,
    phase: &str,
) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if k > dataset.len() {
        return Err(Error::invalid(format!(
            "k = {} exceeds dataset size {}",
            k,
            dataset.len()
        )));
    }
    if q.len() != dataset.dim() {
        return Err(Error::invalid(format!(
            "query has dim {}, dataset has dim {}",
            q.len(),
            dataset.dim()
        )));
    }
    let eval = MeteredDistance::new(dataset, metric, meter, phase);
    let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
    for id in dataset.ids() {
        let cand = Neighbor::new(id, eval.to_query(q, id));
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("heap non-empty") {
            heap.pop();
            heap.push(cand);
        }
    }
    Ok(heap.into_sorted_vec())
}
