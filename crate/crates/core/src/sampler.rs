//! Mini-batch construction: interaction batches, BPR negatives, and the
//! random neighbor adjacency used by sampled aggregation.

use rustc_hash::FxHashMap as HashMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::InteractionGraph;
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

/// Purpose tag separating the random streams of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Shuffle = 0,
    Negatives = 1,
    Neighbors = 2,
    Init = 3,
}

/// Derives independent, reproducible random streams from a global seed.
///
/// The stream for `(epoch, batch, purpose)` does not depend on how many
/// numbers earlier batches consumed, so serial and parallel sampling agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, epoch: u64, batch: u64, purpose: Stream) -> ChaCha8Rng {
        let key = splitmix64(splitmix64(splitmix64(self.seed) ^ epoch) ^ batch);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(purpose as u64);
        rng
    }
}

/// One epoch's partition of the training interactions into batches.
#[derive(Debug, Clone)]
pub struct EpochSchedule {
    order: Vec<u32>,
    batch_size: usize,
}

impl EpochSchedule {
    /// Shuffles all interactions and splits them into batches of
    /// `batch_size`; the final batch holds the remainder.
    pub fn new<R: Rng>(graph: &InteractionGraph, batch_size: usize, rng: &mut R) -> Self {
        assert!(batch_size >= 1, "batch size must be positive");
        let n = graph.n_edges();
        let batch_size = if batch_size > n {
            log::warn!("batch size {batch_size} exceeds {n} interactions; clamping");
            n.max(1)
        } else {
            batch_size
        };
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.shuffle(rng);
        Self { order, batch_size }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn n_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    /// Interactions of batch `b` as `(user, item node)` pairs.
    pub fn batch(&self, graph: &InteractionGraph, b: usize) -> Vec<(usize, usize)> {
        let start = b * self.batch_size;
        let end = (start + self.batch_size).min(self.order.len());
        self.order[start..end]
            .iter()
            .map(|&e| {
                let (u, v) = graph.edges()[e as usize];
                (u as usize, v as usize)
            })
            .collect()
    }
}

/// Draws every batch of one epoch.
pub fn sample_interactions<R: Rng>(
    graph: &InteractionGraph,
    batch_size: usize,
    rng: &mut R,
) -> Vec<Vec<(usize, usize)>> {
    let schedule = EpochSchedule::new(graph, batch_size, rng);
    (0..schedule.n_batches()).map(|b| schedule.batch(graph, b)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub user: usize,
    /// Node id of the observed item.
    pub pos: usize,
    /// Node id of the sampled unobserved item.
    pub neg: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BprBatch {
    pub triplets: Vec<Triplet>,
    /// Distinct node ids of the batch in order of first appearance.
    pub targets: Vec<usize>,
    /// Positions of `(user, pos, neg)` within `targets`, per triplet.
    pub local: Vec<[usize; 3]>,
    /// Pairs dropped because the user has no unobserved item.
    pub skipped: usize,
}

impl BprBatch {
    pub fn from_triplets(triplets: Vec<Triplet>) -> Self {
        let mut position: HashMap<usize, usize> = HashMap::with_capacity_and_hasher(triplets.len() * 3, Default::default());
        let mut targets = Vec::with_capacity(triplets.len() * 3);
        let mut local = Vec::with_capacity(triplets.len());
        let mut slot = |v: usize| -> usize {
            *position.entry(v).or_insert_with(|| {
                targets.push(v);
                targets.len() - 1
            })
        };
        for t in &triplets {
            local.push([slot(t.user), slot(t.pos), slot(t.neg)]);
        }
        Self {
            triplets,
            targets,
            local,
            skipped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Pairs each observed interaction with one uniformly drawn unobserved item.
pub fn sample_negatives<R: Rng>(graph: &InteractionGraph, pairs: &[(usize, usize)], rng: &mut R) -> BprBatch {
    let m = graph.n_items();
    let mut triplets = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    for &(user, pos) in pairs {
        if graph.degree(user) >= m {
            log::warn!("user {user} interacted with every item; skipping triplet");
            skipped += 1;
            continue;
        }
        let neg = loop {
            let j = graph.item_node(rng.gen_range(0..m));
            if !graph.has_interaction(user, j) {
                break j;
            }
        };
        triplets.push(Triplet { user, pos, neg });
    }
    let mut batch = BprBatch::from_triplets(triplets);
    batch.skipped = skipped;
    batch
}

/// Sparse random estimate of the target rows of the normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledAdjacency<T> {
    rows: Vec<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<T>,
}

impl<T: Real> SampledAdjacency<T> {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row_cols(&self, r: usize) -> &[u32] {
        &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    #[inline]
    pub fn row_values(&self, r: usize) -> &[T] {
        &self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    /// Exact target rows of `norm` (no sampling).
    pub fn exact(norm: &CsrMatrix<T>, targets: &[usize]) -> Self {
        let mut out = Self::with_capacity(targets.len(), 0);
        for &u in targets {
            out.cols.extend_from_slice(norm.row_cols(u));
            out.vals.extend_from_slice(norm.row_values(u));
            out.push_row(u);
        }
        out
    }

    fn with_capacity(rows: usize, nnz: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(rows + 1);
        row_ptr.push(0);
        Self {
            rows: Vec::with_capacity(rows),
            row_ptr,
            cols: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    fn push_row(&mut self, u: usize) {
        self.rows.push(u);
        self.row_ptr.push(self.cols.len());
    }

    /// Distinct column nodes of all rows, in order of first appearance.
    pub fn column_nodes(&self) -> Vec<usize> {
        let mut seen = HashMap::with_capacity_and_hasher(self.cols.len(), Default::default());
        let mut out = Vec::new();
        for &c in &self.cols {
            seen.entry(c).or_insert_with(|| out.push(c as usize));
        }
        out
    }
}

/// Samples `min(D, |N(u)|)` members of each target's closed neighborhood
/// (self-loop included) without replacement; entries are scaled by
/// `|N(u)| / drawn` so each row is an unbiased estimate of the `norm` row.
pub fn sample_neighbors<T: Real, R: Rng>(
    norm: &CsrMatrix<T>,
    targets: &[usize],
    sample_size: usize,
    rng: &mut R,
) -> SampledAdjacency<T> {
    assert!(sample_size >= 1, "sample size must be positive");
    let mut out = SampledAdjacency::with_capacity(targets.len(), targets.len() * sample_size);
    let mut picks: Vec<usize> = Vec::with_capacity(sample_size);
    for &u in targets {
        let cols = norm.row_cols(u);
        let vals = norm.row_values(u);
        let len = cols.len();
        if sample_size >= len {
            out.cols.extend_from_slice(cols);
            out.vals.extend_from_slice(vals);
        } else {
            let scale = T::of(len as f64 / sample_size as f64);
            picks.clear();
            picks.extend(index::sample(rng, len, sample_size).into_iter());
            picks.sort_unstable();
            for &p in &picks {
                out.cols.push(cols[p]);
                out.vals.push(scale * vals[p]);
            }
        }
        out.push_row(u);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::uniform_bipartite;
    use std::collections::HashSet;

    fn graph(seed: u64, n: usize, m: usize, e: usize) -> InteractionGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = uniform_bipartite(n, m, e, &mut rng).unwrap();
        InteractionGraph::from_pairs(n, m, &pairs).unwrap()
    }

    #[test]
    fn epoch_covers_every_interaction_once() {
        let g = graph(1, 4, 5, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batches = sample_interactions(&g, 3, &mut rng);
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        let mut all: Vec<(usize, usize)> = batches.concat();
        all.sort_unstable();
        let want: Vec<(usize, usize)> =
            g.edges().iter().map(|&(u, v)| (u as usize, v as usize)).collect();
        assert_eq!(all, want);

        let single = sample_interactions(&g, 10, &mut rng);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].len(), 10);
    }

    #[test]
    fn oversized_batch_is_clamped() {
        let g = graph(1, 4, 5, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = EpochSchedule::new(&g, 50, &mut rng);
        assert_eq!(s.batch_size(), 10);
        assert_eq!(s.n_batches(), 1);
    }

    #[test]
    fn negatives_respect_membership() {
        let g = graph(2, 20, 15, 120);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(usize, usize)> =
            g.edges().iter().map(|&(u, v)| (u as usize, v as usize)).collect();
        let batch = sample_negatives(&g, &pairs, &mut rng);
        assert_eq!(batch.len(), pairs.len());
        for t in &batch.triplets {
            assert!(g.has_interaction(t.user, t.pos));
            assert!(!g.has_interaction(t.user, t.neg));
            assert!(t.neg >= g.n_users());
        }
        let targets: HashSet<usize> = batch.targets.iter().copied().collect();
        assert_eq!(targets.len(), batch.targets.len());
        let want: HashSet<usize> = batch
            .triplets
            .iter()
            .flat_map(|t| [t.user, t.pos, t.neg])
            .collect();
        assert_eq!(targets, want);
        assert!(batch.targets.len() <= 3 * batch.len());
        for (t, l) in batch.triplets.iter().zip(&batch.local) {
            assert_eq!([batch.targets[l[0]], batch.targets[l[1]], batch.targets[l[2]]], [t.user, t.pos, t.neg]);
        }
    }

    #[test]
    fn single_free_item_is_always_chosen() {
        let pairs: Vec<(usize, usize)> = (0..4).map(|i| (0, i)).collect();
        let g = InteractionGraph::from_pairs(1, 5, &pairs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = sample_negatives(&g, &[(0, g.item_node(0)); 50], &mut rng);
        assert!(batch.triplets.iter().all(|t| t.neg == g.item_node(4)));
    }

    #[test]
    fn saturated_user_is_skipped() {
        let g = InteractionGraph::from_pairs(2, 2, &[(0, 0), (0, 1), (1, 0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = sample_negatives(&g, &[(0, 2), (1, 2)], &mut rng);
        assert_eq!(batch.skipped, 1);
        assert_eq!(batch.len(), 1);
        assert_eq!(batch.triplets[0].user, 1);
    }

    #[test]
    fn full_sampling_reproduces_rows() {
        let g = graph(3, 30, 20, 150);
        let norm = g.norm_adjacency();
        let targets: Vec<usize> = (0..g.n_nodes()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = sample_neighbors(norm, &targets, g.max_closed_neighborhood(), &mut rng);
        assert_eq!(a, SampledAdjacency::exact(norm, &targets));
    }

    #[test]
    fn one_neighbor_scales_by_neighborhood() {
        let g = graph(4, 10, 10, 40);
        let norm = g.norm_adjacency();
        let targets: Vec<usize> = (0..g.n_nodes()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = sample_neighbors(norm, &targets, 1, &mut rng);
        for (r, &u) in targets.iter().enumerate() {
            assert_eq!(a.row_cols(r).len(), 1);
            let v = a.row_cols(r)[0] as usize;
            let want = (g.degree(u) + 1) as f64 * norm.get(u, v);
            assert!((a.row_values(r)[0] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn row_sizes_follow_min_rule() {
        let g = graph(5, 25, 25, 200);
        let norm = g.norm_adjacency();
        let targets: Vec<usize> = (0..g.n_nodes()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = sample_neighbors(norm, &targets, 5, &mut rng);
        for (r, &u) in targets.iter().enumerate() {
            assert_eq!(a.row_cols(r).len(), 5.min(g.degree(u) + 1));
            let cols: HashSet<u32> = a.row_cols(r).iter().copied().collect();
            assert_eq!(cols.len(), a.row_cols(r).len());
        }
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let s = RngStreams::new(42);
        let a: u64 = s.stream(1, 2, Stream::Negatives).gen();
        let b: u64 = s.stream(1, 2, Stream::Negatives).gen();
        let c: u64 = s.stream(1, 2, Stream::Neighbors).gen();
        let d: u64 = s.stream(1, 3, Stream::Negatives).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
