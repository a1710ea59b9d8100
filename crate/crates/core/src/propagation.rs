//! Embedding propagation kernels.
//!
//! * exact personalized-PageRank propagation `alpha (I - (1-alpha) Ã)^{-1} E`
//!   through a dense Cholesky solve (small graphs only, used as an oracle);
//! * APPNP power iteration and LightGCN layer averaging over the full graph;
//! * the single-layer implicit update that warm-starts from the previous
//!   iteration's output, with plain neighbor sampling, classic variance
//!   reduction, or the efficient variant whose full aggregation is refreshed
//!   once per epoch into [`VrMemory`].
//!
//! Sampled kernels work on [`SampledAdjacency`] rows. A stack of `L`
//! sampled layers is a list of adjacencies ordered innermost first, where the
//! rows of layer `l - 1` cover the rows and sampled columns of layer `l`, and
//! every layer lists the batch targets first.

use rustc_hash::FxHashMap as HashMap;

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::Rng;

use crate::dense::{axpy, DenseMatrix};
use crate::error::{Error, Result};
use crate::model::EmbeddingState;
use crate::sampler::{sample_neighbors, SampledAdjacency};
use crate::scalar::Real;
use crate::sparse::{spmm, CsrMatrix};

/// Largest node count accepted by the dense PPNP solver.
pub const DENSE_SOLVE_LIMIT: usize = 10_000;

/// Which aggregation estimator the implicit layer uses in each direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VrMode {
    /// Plain neighbor sampling in both directions.
    Ns,
    /// Efficient variance reduction on the forward pass only.
    Fvr,
    /// Efficient variance reduction on the backward pass only.
    Bvr,
    /// Efficient variance reduction in both directions.
    Bivr,
    /// Variance reduction whose full aggregation is recomputed every iteration.
    ClassicVr,
    /// Exact aggregation over the full closed neighborhood.
    Full,
}

impl VrMode {
    pub fn forward_memory(self) -> bool {
        matches!(self, VrMode::Fvr | VrMode::Bivr | VrMode::ClassicVr)
    }

    pub fn backward_memory(self) -> bool {
        matches!(self, VrMode::Bvr | VrMode::Bivr)
    }

    pub fn needs_memory(self) -> bool {
        self.forward_memory() || self.backward_memory()
    }
}

impl std::fmt::Display for VrMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            VrMode::Ns => "ns",
            VrMode::Fvr => "fvr",
            VrMode::Bvr => "bvr",
            VrMode::Bivr => "bivr",
            VrMode::ClassicVr => "classic",
            VrMode::Full => "full",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PropagationConfig {
    /// Teleport factor in `(0, 1]`.
    pub alpha: f64,
    pub layers: usize,
    /// Neighbors drawn per target row.
    pub sample_size: usize,
    pub vr_mode: VrMode,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.45,
            layers: 1,
            sample_size: 10,
            vr_mode: VrMode::Fvr,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} not in (0, 1]", self.alpha)));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        if self.sample_size == 0 {
            return Err(Error::Config("sample size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Epoch-level snapshots for efficient variance reduction.
///
/// `m_ag = Ã m_in` and `m_ag_grad = Ã m_in_grad` hold exactly after
/// [`refresh_memory`].
#[derive(Debug, Clone, PartialEq)]
pub struct VrMemory<T> {
    pub m_in: DenseMatrix<T>,
    pub m_ag: DenseMatrix<T>,
    pub m_in_grad: DenseMatrix<T>,
    pub m_ag_grad: DenseMatrix<T>,
    pub epoch_stamp: u64,
}

impl<T: Real> VrMemory<T> {
    fn check(&self, state: &EmbeddingState<T>) -> Result<()> {
        if self.epoch_stamp != state.epoch {
            return Err(Error::StaleMemory {
                memory: self.epoch_stamp,
                state: state.epoch,
            });
        }
        Ok(())
    }
}

/// Snapshots the output and gradient histories and aggregates them with one
/// full sparse product each.
pub fn refresh_memory<T: Real>(norm: &CsrMatrix<T>, state: &EmbeddingState<T>) -> Result<VrMemory<T>> {
    let m_in = state.e_out_hist.clone();
    let m_in_grad = state.grad_in_hist.clone();
    let m_ag = spmm(norm, &m_in)?;
    let m_ag_grad = spmm(norm, &m_in_grad)?;
    Ok(VrMemory {
        m_in,
        m_ag,
        m_in_grad,
        m_ag_grad,
        epoch_stamp: state.epoch,
    })
}

/// Row lookup by global node id.
pub trait RowSource<T> {
    fn node_row(&self, node: usize) -> &[T];
}

impl<T: Real> RowSource<T> for DenseMatrix<T> {
    #[inline]
    fn node_row(&self, node: usize) -> &[T] {
        self.row(node)
    }
}

/// Rows stored for a subset of nodes.
pub struct LocalRows<'a, T> {
    position: &'a HashMap<usize, usize>,
    data: &'a DenseMatrix<T>,
}

impl<'a, T: Real> LocalRows<'a, T> {
    pub fn new(position: &'a HashMap<usize, usize>, data: &'a DenseMatrix<T>) -> Self {
        Self { position, data }
    }
}

impl<T: Real> RowSource<T> for LocalRows<'_, T> {
    #[inline]
    fn node_row(&self, node: usize) -> &[T] {
        self.data.row(self.position[&node])
    }
}

pub(crate) fn positions(rows: &[usize]) -> HashMap<usize, usize> {
    rows.iter().enumerate().map(|(i, &v)| (v, i)).collect()
}

/// `Â · src` on the sampled rows.
pub fn sampled_aggregate<T: Real>(a_hat: &SampledAdjacency<T>, src: &impl RowSource<T>, dim: usize) -> DenseMatrix<T> {
    let mut out = DenseMatrix::zeros(a_hat.n_rows(), dim);
    for r in 0..a_hat.n_rows() {
        let acc = out.row_mut(r);
        for (&v, &a) in a_hat.row_cols(r).iter().zip(a_hat.row_values(r)) {
            axpy(acc, a, src.node_row(v as usize));
        }
    }
    out
}

/// `Â (src - base) + aggregated` on the sampled rows, where `aggregated`
/// holds full rows `Ã base`.
pub fn variance_reduced_aggregate<T: Real>(
    a_hat: &SampledAdjacency<T>,
    src: &impl RowSource<T>,
    base: &DenseMatrix<T>,
    aggregated: &DenseMatrix<T>,
) -> DenseMatrix<T> {
    let dim = base.cols();
    let mut out = DenseMatrix::zeros(a_hat.n_rows(), dim);
    for (r, &u) in a_hat.rows().iter().enumerate() {
        let acc = out.row_mut(r);
        acc.copy_from_slice(aggregated.row(u));
        for (&v, &a) in a_hat.row_cols(r).iter().zip(a_hat.row_values(r)) {
            let v = v as usize;
            for ((o, &x), &b) in acc.iter_mut().zip(src.node_row(v)).zip(base.row(v)) {
                *o += a * (x - b);
            }
        }
    }
    out
}

/// Classic variance-reduced aggregation `Â (current - history) + Ã history`
/// on the sampled rows. The full product `Ã history` is recomputed on every call.
pub fn classic_vr_aggregate<T: Real>(
    norm: &CsrMatrix<T>,
    a_hat: &SampledAdjacency<T>,
    current: &impl RowSource<T>,
    history: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    let full = spmm(norm, history)?;
    Ok(variance_reduced_aggregate(a_hat, current, history, &full))
}

/// Base and full aggregation used by a variance-reduced pass.
#[derive(Clone, Copy)]
pub struct VrTerms<'a, T> {
    pub base: &'a DenseMatrix<T>,
    pub aggregated: &'a DenseMatrix<T>,
}

/// Source of the teleport term `alpha * t` of each implicit layer.
#[derive(Clone, Copy)]
pub enum Teleport<'a, T> {
    /// Full-size matrix indexed by node id.
    Nodes(&'a DenseMatrix<T>),
    /// Rows for the batch targets only (the leading rows of every layer);
    /// zero elsewhere.
    Targets(&'a DenseMatrix<T>),
}

fn mix_teleport<T: Real>(agg: &mut DenseMatrix<T>, rows: &[usize], teleport: Teleport<'_, T>, alpha: T) {
    let keep = T::one() - alpha;
    for (r, &u) in rows.iter().enumerate() {
        let t = match teleport {
            Teleport::Nodes(m) => Some(m.row(u)),
            Teleport::Targets(m) => (r < m.rows()).then(|| m.row(r)),
        };
        let row = agg.row_mut(r);
        match t {
            Some(t) => {
                for (o, &x) in row.iter_mut().zip(t) {
                    *o = keep * *o + alpha * x;
                }
            }
            None => row.iter_mut().for_each(|o| *o = keep * *o),
        }
    }
}

/// Applies `X_l = (1-alpha) agg_l(X_{l-1}) + alpha * teleport` through a stack
/// of sampled layers, starting from the full-size `history`.
///
/// With `terms`, each aggregation is variance reduced against
/// `terms.base`/`terms.aggregated`; without, it is the plain estimate `Â X`.
/// Returns the outermost layer's rows.
pub fn implicit_layers<T: Real>(
    frames: &[SampledAdjacency<T>],
    history: &DenseMatrix<T>,
    terms: Option<VrTerms<'_, T>>,
    teleport: Teleport<'_, T>,
    alpha: T,
) -> DenseMatrix<T> {
    assert!(!frames.is_empty(), "at least one layer required");
    let dim = history.cols();
    let mut prev: Option<(HashMap<usize, usize>, DenseMatrix<T>)> = None;
    let mut out = None;
    for (l, a_hat) in frames.iter().enumerate() {
        let mut agg = match (&prev, terms) {
            (None, None) => sampled_aggregate(a_hat, history, dim),
            (None, Some(t)) => variance_reduced_aggregate(a_hat, history, t.base, t.aggregated),
            (Some((pos, x)), None) => sampled_aggregate(a_hat, &LocalRows::new(pos, x), dim),
            (Some((pos, x)), Some(t)) => {
                variance_reduced_aggregate(a_hat, &LocalRows::new(pos, x), t.base, t.aggregated)
            }
        };
        mix_teleport(&mut agg, a_hat.rows(), teleport, alpha);
        if l + 1 < frames.len() {
            prev = Some((positions(a_hat.rows()), agg));
        } else {
            out = Some(agg);
        }
    }
    out.expect("at least one layer")
}

/// Forward implicit layer with efficient variance reduction:
/// `(1-alpha) [Â (E_out_hist - M_in) + M_ag] + alpha E_in` on the rows of `a_hat`.
pub fn evr_forward<T: Real>(
    state: &EmbeddingState<T>,
    memory: &VrMemory<T>,
    a_hat: &SampledAdjacency<T>,
    alpha: T,
) -> Result<DenseMatrix<T>> {
    memory.check(state)?;
    let terms = VrTerms {
        base: &memory.m_in,
        aggregated: &memory.m_ag,
    };
    Ok(implicit_layers(
        std::slice::from_ref(a_hat),
        &state.e_out_hist,
        Some(terms),
        Teleport::Nodes(&state.e_in),
        alpha,
    ))
}

/// Backward implicit layer with efficient variance reduction:
/// `(1-alpha) [Â (G_hist - M_in') + M_ag'] + alpha dL/dE_out` on the rows of
/// `a_hat`; `grad_out` holds one row per row of `a_hat`.
pub fn evr_backward<T: Real>(
    state: &EmbeddingState<T>,
    memory: &VrMemory<T>,
    a_hat: &SampledAdjacency<T>,
    grad_out: &DenseMatrix<T>,
    alpha: T,
) -> Result<DenseMatrix<T>> {
    memory.check(state)?;
    if grad_out.rows() != a_hat.n_rows() {
        return Err(Error::Dimension(format!(
            "{} gradient rows for {} sampled rows",
            grad_out.rows(),
            a_hat.n_rows()
        )));
    }
    let terms = VrTerms {
        base: &memory.m_in_grad,
        aggregated: &memory.m_ag_grad,
    };
    Ok(implicit_layers(
        std::slice::from_ref(a_hat),
        &state.grad_in_hist,
        Some(terms),
        Teleport::Targets(grad_out),
        alpha,
    ))
}

/// Samples a stack of `layers` adjacencies for `targets`, innermost first.
/// `sample_size = None` takes every closed neighbor (exact rows).
pub fn sample_layers<T: Real, R: Rng>(
    norm: &CsrMatrix<T>,
    targets: &[usize],
    layers: usize,
    sample_size: Option<usize>,
    rng: &mut R,
) -> Vec<SampledAdjacency<T>> {
    let mut frames = Vec::with_capacity(layers);
    let mut rows = targets.to_vec();
    for l in 0..layers {
        let a_hat = match sample_size {
            Some(d) => sample_neighbors(norm, &rows, d, rng),
            None => SampledAdjacency::exact(norm, &rows),
        };
        if l + 1 < layers {
            let mut pos = positions(&rows);
            for c in a_hat.column_nodes() {
                let next = rows.len();
                pos.entry(c).or_insert_with(|| {
                    rows.push(c);
                    next
                });
            }
        }
        frames.push(a_hat);
    }
    frames.reverse();
    frames
}

/// Dense Cholesky factorization of `I - (1-alpha) Ã` for repeated exact
/// PPNP propagation on a fixed graph.
pub struct PpnpSolver {
    factor: Cholesky<f64, Dyn>,
    alpha: f64,
    n: usize,
}

impl PpnpSolver {
    pub fn new(norm: &CsrMatrix<f64>, alpha: f64) -> Result<Self> {
        let n = norm.n_rows();
        if n > DENSE_SOLVE_LIMIT {
            return Err(Error::TooLargeForDense {
                nodes: n,
                limit: DENSE_SOLVE_LIMIT,
            });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {alpha} not in (0, 1]")));
        }
        let mut system = DMatrix::<f64>::identity(n, n);
        for r in 0..n {
            for (&c, &v) in norm.row_cols(r).iter().zip(norm.row_values(r)) {
                system[(r, c as usize)] -= (1.0 - alpha) * v;
            }
        }
        let factor = Cholesky::new(system)
            .ok_or_else(|| Error::Config("PPNP system is not positive definite".into()))?;
        Ok(Self { factor, alpha, n })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `alpha (I - (1-alpha) Ã)^{-1} e_in`, in `f64`.
    pub fn solve<T: Real>(&self, e_in: &DenseMatrix<T>) -> Result<DenseMatrix<f64>> {
        if e_in.rows() != self.n {
            return Err(Error::Dimension(format!(
                "{} embedding rows for a {}-node graph",
                e_in.rows(),
                self.n
            )));
        }
        let d = e_in.cols();
        let rhs = DMatrix::from_fn(self.n, d, |r, c| self.alpha * e_in.get(r, c).as_f64());
        let x = self.factor.solve(&rhs);
        Ok(DenseMatrix::from_fn(self.n, d, |r, c| x[(r, c)]))
    }
}

/// Exact PPNP propagation by direct solve; refuses graphs above
/// [`DENSE_SOLVE_LIMIT`] nodes.
pub fn ppnp_exact<T: Real>(norm: &CsrMatrix<f64>, e_in: &DenseMatrix<T>, alpha: f64) -> Result<DenseMatrix<f64>> {
    PpnpSolver::new(norm, alpha)?.solve(e_in)
}

/// `L` APPNP steps `E_{l+1} = (1-alpha) Ã E_l + alpha E_in` from `E_0 = E_in`.
pub fn appnp_iterate<T: Real>(norm: &CsrMatrix<T>, e_in: &DenseMatrix<T>, alpha: T, layers: usize) -> Result<DenseMatrix<T>> {
    let mut e = e_in.clone();
    for _ in 0..layers {
        let mut next = spmm(norm, &e)?;
        next.combine(T::one() - alpha, alpha, e_in);
        e = next;
    }
    Ok(e)
}

/// LightGCN output `(1/(L+1)) sum_{l=0..L} Ã^l E_in`.
///
/// Because Ã is symmetric, the same map sends output gradients to input
/// gradients.
pub fn lightgcn_propagate<T: Real>(norm: &CsrMatrix<T>, e_in: &DenseMatrix<T>, layers: usize) -> Result<DenseMatrix<T>> {
    let mut acc = e_in.clone();
    let mut e = e_in.clone();
    for _ in 0..layers {
        e = spmm(norm, &e)?;
        acc.combine(T::one(), T::one(), &e);
    }
    acc.scale(T::one() / T::of((layers + 1) as f64));
    Ok(acc)
}

/// Per-layer outputs of a sampled LightGCN pass.
#[derive(Debug, Clone)]
pub struct SampledLightGcn<T> {
    /// `X_1 .. X_L`, each on the rows of its layer.
    pub layers: Vec<DenseMatrix<T>>,
    /// Layer-averaged output on the batch targets.
    pub output: DenseMatrix<T>,
}

/// Sampled LightGCN forward pass over `frames`. With `histories`, layer `l`
/// uses classic variance reduction against `histories[l-1]`, whose full
/// aggregation must be supplied in `aggregated[l-1]`.
pub fn lightgcn_sampled_forward<T: Real>(
    frames: &[SampledAdjacency<T>],
    e_in: &DenseMatrix<T>,
    n_targets: usize,
    vr: Option<(&[DenseMatrix<T>], &[DenseMatrix<T>])>,
) -> SampledLightGcn<T> {
    let dim = e_in.cols();
    let mut layers: Vec<DenseMatrix<T>> = Vec::with_capacity(frames.len());
    let mut prev_pos: Option<HashMap<usize, usize>> = None;
    for (l, a_hat) in frames.iter().enumerate() {
        let x = match (&prev_pos, vr) {
            (None, None) => sampled_aggregate(a_hat, e_in, dim),
            (None, Some((h, g))) => variance_reduced_aggregate(a_hat, e_in, &h[l], &g[l]),
            (Some(pos), None) => sampled_aggregate(a_hat, &LocalRows::new(pos, &layers[l - 1]), dim),
            (Some(pos), Some((h, g))) => {
                variance_reduced_aggregate(a_hat, &LocalRows::new(pos, &layers[l - 1]), &h[l], &g[l])
            }
        };
        prev_pos = Some(positions(a_hat.rows()));
        layers.push(x);
    }
    let outer = frames.last().expect("at least one layer");
    let mut output = DenseMatrix::zeros(n_targets, dim);
    let inv = T::one() / T::of((frames.len() + 1) as f64);
    for t in 0..n_targets {
        let row = output.row_mut(t);
        axpy(row, inv, e_in.row(outer.rows()[t]));
        for x in &layers {
            axpy(row, inv, x.row(t));
        }
    }
    SampledLightGcn { layers, output }
}

/// Gradient rows accumulated by node id.
#[derive(Debug, Clone)]
pub struct RowAccumulator<T> {
    position: HashMap<usize, usize>,
    rows: Vec<usize>,
    data: Vec<T>,
    dim: usize,
}

impl<T: Real> RowAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            position: HashMap::default(),
            rows: Vec::new(),
            data: Vec::new(),
            dim,
        }
    }

    pub fn row_mut(&mut self, node: usize) -> &mut [T] {
        let dim = self.dim;
        let p = match self.position.get(&node) {
            Some(&p) => p,
            None => {
                let p = self.rows.len();
                self.position.insert(node, p);
                self.rows.push(node);
                self.data.resize(self.data.len() + dim, T::zero());
                p
            }
        };
        &mut self.data[p * dim..(p + 1) * dim]
    }

    pub fn into_parts(self) -> (Vec<usize>, DenseMatrix<T>) {
        let n = self.rows.len();
        let m = DenseMatrix::from_vec(n, self.dim, self.data).expect("accumulator shape");
        (self.rows, m)
    }
}

/// Backward pass of [`lightgcn_sampled_forward`]; returns gradients with
/// respect to the input embedding rows that were read.
pub fn lightgcn_sampled_backward<T: Real>(
    frames: &[SampledAdjacency<T>],
    grad_output: &DenseMatrix<T>,
) -> (Vec<usize>, DenseMatrix<T>) {
    let dim = grad_output.cols();
    let n_targets = grad_output.rows();
    let inv = T::one() / T::of((frames.len() + 1) as f64);
    let seed = |rows: usize| -> DenseMatrix<T> {
        let mut g = DenseMatrix::zeros(rows, dim);
        for t in 0..n_targets {
            axpy(g.row_mut(t), inv, grad_output.row(t));
        }
        g
    };
    let outer = frames.last().expect("at least one layer");
    let mut grad = seed(outer.n_rows());
    for l in (0..frames.len()).rev() {
        let a_hat = &frames[l];
        if l == 0 {
            let mut acc = RowAccumulator::new(dim);
            for t in 0..n_targets {
                axpy(acc.row_mut(outer.rows()[t]), inv, grad_output.row(t));
            }
            for r in 0..a_hat.n_rows() {
                for (&v, &a) in a_hat.row_cols(r).iter().zip(a_hat.row_values(r)) {
                    axpy(acc.row_mut(v as usize), a, grad.row(r));
                }
            }
            return acc.into_parts();
        }
        let inner = &frames[l - 1];
        let pos = positions(inner.rows());
        let mut next = seed(inner.n_rows());
        for r in 0..a_hat.n_rows() {
            for (&v, &a) in a_hat.row_cols(r).iter().zip(a_hat.row_values(r)) {
                axpy(next.row_mut(pos[&(v as usize)]), a, grad.row(r));
            }
        }
        grad = next;
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::InteractionGraph;
    use crate::synthetic::uniform_bipartite;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_graph(seed: u64, n: usize, m: usize, e: usize) -> InteractionGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = uniform_bipartite(n, m, e, &mut rng).unwrap();
        InteractionGraph::from_pairs(n, m, &pairs).unwrap()
    }

    fn random_matrix(seed: u64, rows: usize, cols: usize) -> DenseMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Dense reference: plain matrix product with explicit loops.
    fn dense_mul(a: &DenseMatrix<f64>, x: &DenseMatrix<f64>) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(a.rows(), x.cols(), |r, c| {
            (0..a.cols()).map(|k| a.get(r, k) * x.get(k, c)).sum()
        })
    }

    fn max_abs_diff(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn ppnp_alpha_one_is_identity() {
        let g = random_graph(1, 6, 5, 12);
        let e = random_matrix(2, g.n_nodes(), 3);
        let out = ppnp_exact(g.norm_adjacency(), &e, 1.0).unwrap();
        assert!(max_abs_diff(&out, &e) < 1e-14);
    }

    #[test]
    fn ppnp_two_node_solve() {
        // Ã = [[.5,.5],[.5,.5]], alpha = .5: (I - .5 Ã)^{-1} = [[1.5,.5],[.5,1.5]] / ... solved by hand:
        // system [[.75,-.25],[-.25,.75]] x = [.5, 0] -> x = [.75, .25]
        let g = InteractionGraph::from_pairs(1, 1, &[(0, 0)]).unwrap();
        let e = DenseMatrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let out = ppnp_exact(g.norm_adjacency(), &e, 0.5).unwrap();
        assert!((out.get(0, 0) - 0.75).abs() < 1e-14);
        assert!((out.get(1, 0) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn ppnp_satisfies_fixed_point() {
        let g = random_graph(3, 40, 30, 200);
        let e = random_matrix(4, g.n_nodes(), 4);
        let alpha = 0.3;
        let out = ppnp_exact(g.norm_adjacency(), &e, alpha).unwrap();
        let mut resid = spmm(g.norm_adjacency(), &out).unwrap();
        resid.combine(-(1.0 - alpha), -alpha, &e);
        resid.combine(1.0, 1.0, &out);
        assert!(resid.frobenius_norm() <= 1e-9 * e.frobenius_norm());
    }

    #[test]
    fn ppnp_guard_refuses_large_graphs() {
        let norm = CsrMatrix::<f64>::identity(DENSE_SOLVE_LIMIT + 1);
        assert!(matches!(
            PpnpSolver::new(&norm, 0.5),
            Err(Error::TooLargeForDense { .. })
        ));
    }

    #[test]
    fn appnp_zero_layers_and_dense_oracle() {
        let g = random_graph(5, 12, 8, 40);
        let e = random_matrix(6, g.n_nodes(), 3);
        let norm = g.norm_adjacency();
        assert_eq!(appnp_iterate(norm, &e, 0.45, 0).unwrap(), e);

        let dense = norm.to_dense();
        let mut want = e.clone();
        for _ in 0..3 {
            let mut next = dense_mul(&dense, &want);
            next.combine(0.55, 0.45, &e);
            want = next;
        }
        let got = appnp_iterate(norm, &e, 0.45, 3).unwrap();
        assert!(max_abs_diff(&got, &want) < 1e-10);
    }

    #[test]
    fn appnp_converges_geometrically() {
        let g = random_graph(7, 15, 15, 60);
        let e = random_matrix(8, g.n_nodes(), 2);
        let alpha = 0.4;
        let exact = ppnp_exact(g.norm_adjacency(), &e, alpha).unwrap();
        let mut prev_err = crate::dense::frobenius_distance(&e, &exact);
        for layers in 1..12 {
            let approx = appnp_iterate(g.norm_adjacency(), &e, alpha, layers).unwrap();
            let err = crate::dense::frobenius_distance(&approx, &exact);
            assert!(err <= (1.0 - alpha) * prev_err * (1.0 + 1e-9) + 1e-15);
            prev_err = err;
        }
    }

    #[test]
    fn lightgcn_matches_dense_oracle() {
        let g = random_graph(9, 12, 8, 40);
        let e = random_matrix(10, g.n_nodes(), 3);
        let dense = g.norm_adjacency().to_dense();
        let one = lightgcn_propagate(g.norm_adjacency(), &e, 1).unwrap();
        let mut want = dense_mul(&dense, &e);
        want.combine(0.5, 0.5, &e);
        assert!(max_abs_diff(&one, &want) < 1e-12);

        let mut layer = e.clone();
        let mut sum = e.clone();
        for _ in 0..3 {
            layer = dense_mul(&dense, &layer);
            sum.combine(1.0, 1.0, &layer);
        }
        sum.scale(0.25);
        let three = lightgcn_propagate(g.norm_adjacency(), &e, 3).unwrap();
        assert!(max_abs_diff(&three, &sum) < 1e-10);
    }

    #[test]
    fn lightgcn_regular_graph_eigenvector() {
        // 4-cycle as a 2-regular bipartite graph: every closed neighborhood has 3 nodes,
        // so Ã has constant row sums 1 and the all-ones vector is a fixed point.
        let g = InteractionGraph::from_pairs(2, 2, &[(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        let e = DenseMatrix::from_vec(4, 1, vec![0.7; 4]).unwrap();
        let out = lightgcn_propagate(g.norm_adjacency(), &e, 3).unwrap();
        for r in 0..4 {
            assert!((out.get(r, 0) - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn memory_refresh_is_exact() {
        let g = random_graph(11, 10, 10, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let state = EmbeddingState::<f64>::init(10, 10, 4, 0.1, &mut rng);
        let mem = refresh_memory(g.norm_adjacency(), &state).unwrap();
        assert_eq!(mem.m_in, state.e_in);
        assert_eq!(mem.m_ag, spmm(g.norm_adjacency(), &mem.m_in).unwrap());
        assert!(mem.m_in_grad.as_slice().iter().all(|&x| x == 0.0));
        assert!(mem.m_ag_grad.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn evr_first_step_is_exact_aggregation() {
        let g = random_graph(12, 20, 15, 80);
        let norm = g.norm_adjacency();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = EmbeddingState::<f64>::init(20, 15, 3, 0.1, &mut rng);
        let mem = refresh_memory(norm, &state).unwrap();
        let targets: Vec<usize> = (0..g.n_nodes()).step_by(3).collect();
        let a_hat = sample_neighbors(norm, &targets, 2, &mut rng);
        let out = evr_forward(&state, &mem, &a_hat, 0.45).unwrap();
        for (r, &u) in targets.iter().enumerate() {
            for c in 0..3 {
                let want = 0.55 * mem.m_ag.get(u, c) + 0.45 * state.e_in.get(u, c);
                assert!((out.get(r, c) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn stale_memory_is_rejected() {
        let g = random_graph(13, 5, 5, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = EmbeddingState::<f64>::init(5, 5, 2, 0.1, &mut rng);
        let mem = refresh_memory(g.norm_adjacency(), &state).unwrap();
        state.epoch += 1;
        let a_hat = SampledAdjacency::exact(g.norm_adjacency(), &[0, 1]);
        assert!(matches!(
            evr_forward(&state, &mem, &a_hat, 0.5),
            Err(Error::StaleMemory { .. })
        ));
    }

    #[test]
    fn evr_backward_trivial_cases() {
        let g = random_graph(14, 8, 8, 25);
        let norm = g.norm_adjacency();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let state = EmbeddingState::<f64>::init(8, 8, 3, 0.1, &mut rng);
        let mem = refresh_memory(norm, &state).unwrap();
        let targets = vec![0, 3, 9];
        let a_hat = sample_neighbors(norm, &targets, 2, &mut rng);
        let zero = DenseMatrix::zeros(3, 3);
        let out = evr_backward(&state, &mem, &a_hat, &zero, 0.45).unwrap();
        assert!(out.as_slice().iter().all(|&x| x == 0.0));

        let g_out = random_matrix(5, 3, 3);
        let out = evr_backward(&state, &mem, &a_hat, &g_out, 1.0).unwrap();
        assert_eq!(out, g_out);
    }

    #[test]
    fn classic_vr_with_exact_history_is_exact() {
        let g = random_graph(15, 10, 12, 50);
        let norm = g.norm_adjacency();
        let e = random_matrix(6, g.n_nodes(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let targets: Vec<usize> = (0..g.n_nodes()).collect();
        let a_hat = sample_neighbors(norm, &targets, 1, &mut rng);
        let out = classic_vr_aggregate(norm, &a_hat, &e, &e).unwrap();
        let want = spmm(norm, &e).unwrap();
        assert!(max_abs_diff(&out, &want) < 1e-14);
    }

    #[test]
    fn layered_full_sampling_matches_appnp_rows() {
        // With exact rows and the history equal to E_in, two implicit layers are
        // two APPNP steps restricted to the targets.
        let g = random_graph(16, 10, 10, 35);
        let norm = g.norm_adjacency();
        let e = random_matrix(7, g.n_nodes(), 3);
        let targets = vec![2, 13, 5];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let frames = sample_layers(norm, &targets, 2, None, &mut rng);
        let out = implicit_layers(&frames, &e, None, Teleport::Nodes(&e), 0.3);
        let want = appnp_iterate(norm, &e, 0.3, 2).unwrap().gather(&targets);
        assert!(max_abs_diff(&out, &want) < 1e-13);
    }

    #[test]
    fn sampled_lightgcn_full_rows_match_full_propagation() {
        let g = random_graph(17, 10, 10, 35);
        let norm = g.norm_adjacency();
        let e = random_matrix(8, g.n_nodes(), 3);
        let targets = vec![1, 12, 7, 19];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frames = sample_layers(norm, &targets, 3, None, &mut rng);
        let out = lightgcn_sampled_forward(&frames, &e, targets.len(), None);
        let want = lightgcn_propagate(norm, &e, 3).unwrap().gather(&targets);
        assert!(max_abs_diff(&out.output, &want) < 1e-13);
    }

    #[test]
    fn sampled_lightgcn_backward_matches_full_transpose() {
        let g = random_graph(18, 10, 10, 35);
        let norm = g.norm_adjacency();
        let targets = vec![1, 12, 7];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let frames = sample_layers(norm, &targets, 2, None, &mut rng);
        let gy = random_matrix(9, targets.len(), 2);
        let (rows, grads) = lightgcn_sampled_backward(&frames, &gy);
        let mut full = DenseMatrix::zeros(g.n_nodes(), 2);
        full.scatter(&targets, &gy);
        let want = lightgcn_propagate(norm, &full, 2).unwrap();
        let mut got = DenseMatrix::zeros(g.n_nodes(), 2);
        got.scatter(&rows, &grads);
        assert!(max_abs_diff(&got, &want) < 1e-13);
    }
}
